from typing import Dict, List

import numpy as np
from pydantic import BaseModel, Field, model_validator

METRIC_NAMES = ("auc", "acc", "sen", "spe", "f1")


class FoldSplit(BaseModel):
    """
    Divisão de uma dobra da validação cruzada (treino/validação/teste em 3:1:1).
    """
    fold_id: int = Field(..., ge=0)
    train: List[str]
    val: List[str]
    test: List[str]

    @model_validator(mode="after")
    def check_disjoint(self) -> "FoldSplit":
        """As três listas devem ser disjuntas"""
        train, val, test = set(self.train), set(self.val), set(self.test)
        if train & val or train & test or val & test:
            raise ValueError("Listas de treino, validação e teste devem ser disjuntas")
        return self


class Metrics(BaseModel):
    """
    Métricas de uma avaliação (limiar de decisão 0.5).
    """
    auc: float = Field(..., ge=0, le=1)
    acc: float = Field(..., ge=0, le=1)
    sen: float = Field(..., ge=0, le=1)
    spe: float = Field(..., ge=0, le=1)
    f1: float = Field(..., ge=0, le=1)
    tp: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)

    model_config = {
        "json_schema_extra": {
            "example": {
                "auc": 0.75, "acc": 0.75, "sen": 0.5, "spe": 1.0, "f1": 0.6667,
                "tp": 1, "tn": 2, "fp": 0, "fn": 1
            }
        }
    }


class MetricsReport(BaseModel):
    """
    Métricas por dobra com média e desvio padrão (populacional).
    """
    folds: List[Metrics]
    mean: Dict[str, float]
    std: Dict[str, float]

    @classmethod
    def from_folds(cls, folds: List[Metrics]) -> "MetricsReport":
        """Agrega as métricas de várias dobras"""
        if not folds:
            raise ValueError("É necessária pelo menos uma dobra")
        values = {name: np.array([getattr(m, name) for m in folds], dtype=np.float64) for name in METRIC_NAMES}
        return cls(
            folds=list(folds),
            mean={name: float(v.mean()) for name, v in values.items()},
            std={name: float(v.std()) for name, v in values.items()},
        )

    def formatted(self, name: str) -> str:
        """Formata uma métrica como 'média±desvio' em porcentagem"""
        return f"{100 * self.mean[name]:.2f}±{100 * self.std[name]:.2f}"
