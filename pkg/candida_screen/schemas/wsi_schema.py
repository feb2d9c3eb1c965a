from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from candida_screen.schemas.tile_schema import TileResult


class Verdict(BaseModel):
    """Decisão de uma lâmina"""
    score: float = Field(..., ge=0.0, le=1.0)
    pred: int = Field(..., ge=0, le=1)


class WSIBundle(BaseModel):
    """
    Resultados de todos os tiles de uma lâmina, com rótulo e veredito opcionais.
    """
    slide_id: str
    tile_results: List[TileResult] = Field(default_factory=list)
    label: Optional[int] = Field(None, ge=0, le=1)
    verdict: Optional[Verdict] = None


@dataclass
class TopKSelection:
    """
    Top-k tiles de uma lâmina em ordem decrescente de score.

    Entradas de preenchimento têm score 0, embedding nulo e padding=True.
    """
    scores: np.ndarray
    embeddings: np.ndarray
    padding: np.ndarray
    tile_indices: List[int]

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def n_real(self) -> int:
        return int((~self.padding).sum())
