"""
Métricas de classificação binária (AUC, ACC, Sen, Spe, F1).
"""
from typing import Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, roc_auc_score

from candida_screen.core.exceptions import MetricError, ShapeError
from candida_screen.schemas.metrics_schema import Metrics

DECISION_THRESHOLD = 0.5


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def evaluate(scores: Sequence[float], labels: Sequence[int], threshold: float = DECISION_THRESHOLD) -> Metrics:
    """
    Calcula as métricas de uma avaliação.

    A AUC é a probabilidade de concordância entre pares (empates valem 0.5);
    as demais usam predição positiva quando score >= threshold.

    Raises:
        ShapeError: comprimentos diferentes
        MetricError: rótulos não binários ou de uma única classe
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} e labels {labels.shape} devem ser vetores de mesmo tamanho")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("Rótulos devem ser binários (0/1)")
    labels = labels.astype(np.int64)
    if len(np.unique(labels)) < 2:
        raise MetricError("AUC indefinida: o conjunto de rótulos possui uma única classe")

    auc = float(roc_auc_score(labels, scores))
    preds = (scores >= threshold).astype(np.int64)
    tn, fp, fn, tp = (int(v) for v in confusion_matrix(labels, preds, labels=[0, 1]).ravel())
    return Metrics(
        auc=auc,
        acc=(tp + tn) / len(labels),
        sen=_ratio(tp, tp + fn),
        spe=_ratio(tn, tn + fp),
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        tp=tp, tn=tn, fp=fp, fn=fn,
    )
