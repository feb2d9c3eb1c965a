"""
Agregação de lâmina: seleção top-k e o baseline por limiar.
"""
from typing import List, Sequence

import numpy as np

from candida_screen.core.exceptions import ParameterError
from candida_screen.schemas.tile_schema import TileResult
from candida_screen.schemas.wsi_schema import TopKSelection, Verdict


def rank_topk(tile_results: Sequence[TileResult], k: int = 10) -> TopKSelection:
    """
    Ordena os tiles por score decrescente (empate: menor índice primeiro) e
    mantém os k primeiros; completa com (score 0, embedding nulo, padding).

    Resultados com tile_id já visto são ignorados, então duplicar a lista de
    tiles não altera a seleção.

    Raises:
        ParameterError: lista vazia ou k < 1
    """
    if k < 1:
        raise ParameterError(f"k deve ser >= 1, recebido {k}")
    if not tile_results:
        raise ParameterError("A lâmina não possui tiles")

    seen = set()
    unique: List[int] = []
    for index, result in enumerate(tile_results):
        if result.tile_id is not None:
            if result.tile_id in seen:
                continue
            seen.add(result.tile_id)
        unique.append(index)

    scores = np.array([tile_results[i].score for i in unique], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")[:k]
    chosen = [unique[i] for i in order]

    dim = len(np.asarray(tile_results[0].embedding).ravel())
    top_scores = np.zeros(k, dtype=np.float64)
    embeddings = np.zeros((k, dim), dtype=np.float32)
    padding = np.ones(k, dtype=bool)
    for rank, index in enumerate(chosen):
        top_scores[rank] = tile_results[index].score
        embeddings[rank] = np.asarray(tile_results[index].embedding, dtype=np.float32).ravel()
        padding[rank] = False
    return TopKSelection(scores=top_scores, embeddings=embeddings, padding=padding, tile_indices=chosen)


def aggregate_threshold(tile_results: Sequence[TileResult], k: int = 10, tau: float = 0.5) -> Verdict:
    """Score da lâmina = média dos top-k scores reais; positiva se > tau"""
    selection = rank_topk(tile_results, k)
    score = float(selection.scores[~selection.padding].mean())
    return Verdict(score=score, pred=int(score > tau))
