"""
Divisões estratificadas da validação cruzada (treino/validação/teste 3:1:1).
"""
from typing import List, Sequence, Tuple

import numpy as np
from sklearn.model_selection import StratifiedKFold

from candida_screen.core.exceptions import DatasetError, ParameterError
from candida_screen.schemas.metrics_schema import FoldSplit


def make_folds(
    ids: Sequence[str],
    labels: Sequence[int],
    n_folds: int = 5,
    seed: int = 0,
) -> List[FoldSplit]:
    """
    Gera n_folds divisões estratificadas por rótulo.

    Os blocos de teste vêm do StratifiedKFold embaralhado pela semente. A dobra
    f usa o bloco f como teste, o bloco (f+1) mod n como validação e o
    restante como treino.

    Raises:
        DatasetError: menos ids que dobras
    """
    ids = list(ids)
    labels = list(labels)
    if n_folds < 2:
        raise ParameterError(f"n_folds deve ser >= 2, recebido {n_folds}")
    if len(ids) != len(labels):
        raise ParameterError("ids e labels devem ter o mesmo tamanho")
    if len(set(ids)) != len(ids):
        raise DatasetError("ids duplicados")
    if len(ids) < n_folds:
        raise DatasetError(f"São necessários pelo menos {n_folds} ids, recebidos {len(ids)}")

    splitter = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
    try:
        chunks = [[ids[j] for j in test] for _, test in splitter.split(np.zeros(len(ids)), np.asarray(labels))]
    except ValueError as e:
        raise DatasetError(f"Não foi possível estratificar em {n_folds} dobras: {e}") from e

    folds = []
    for fold in range(n_folds):
        val_index = (fold + 1) % n_folds
        train = [item for c, chunk in enumerate(chunks) if c not in (fold, val_index) for item in chunk]
        folds.append(FoldSplit(fold_id=fold, train=train, val=list(chunks[val_index]), test=list(chunks[fold])))
    return folds


def split_detection_pool(
    ids: Sequence[str],
    labels: Sequence[int],
    fraction: float = 0.5,
    seed: int = 0,
) -> Tuple[List[str], List[str]]:
    """
    Reserva uma fração dos tiles positivos para o pré-treino de detecção.

    Returns:
        Tuple[List[str], List[str]]: (ids de detecção, ids restantes para validação cruzada)
    """
    if not 0.0 <= fraction < 1.0:
        raise ParameterError(f"fraction deve estar em [0, 1), recebido {fraction}")
    positives = [i for i, lab in zip(ids, labels) if lab == 1]
    rng = np.random.default_rng([seed, 2])
    n_detect = int(np.floor(len(positives) * fraction))
    chosen = set(positives[j] for j in rng.permutation(len(positives))[:n_detect])
    detection = [i for i in ids if i in chosen]
    remaining = [i for i in ids if i not in chosen]
    return detection, remaining


def with_training_extra(folds: Sequence[FoldSplit], extra: Sequence[str]) -> List[FoldSplit]:
    """Acrescenta ids (por exemplo, o pool de detecção) ao treino de toda dobra"""
    return [
        FoldSplit(fold_id=f.fold_id, train=list(f.train) + list(extra), val=f.val, test=f.test) for f in folds
    ]
