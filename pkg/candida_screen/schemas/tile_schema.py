import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from candida_screen.schemas.synth_schema import CANDIDA_INDEX


class TileResult(BaseModel):
    """
    Saída do classificador para um tile: probabilidade de candida, logits e
    embedding do token CLS (antes da FC).
    """
    score: float = Field(..., ge=0.0, le=1.0)
    logits: Tuple[float, float]
    embedding: np.ndarray
    tile_id: Optional[str] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_softmax(self) -> "TileResult":
        """score deve ser softmax(logits)[candida]"""
        a, b = self.logits
        m = max(a, b)
        exps = (math.exp(a - m), math.exp(b - m))
        expected = exps[CANDIDA_INDEX] / sum(exps)
        if abs(expected - self.score) > 1e-6:
            raise ValueError(f"score {self.score} difere de softmax(logits) {expected}")
        return self

    @classmethod
    def from_logits(cls, logits, embedding, tile_id: Optional[str] = None) -> "TileResult":
        """Cria o resultado a partir de 2 logits, calculando o score via softmax"""
        a, b = float(logits[0]), float(logits[1])
        m = max(a, b)
        exps = (math.exp(a - m), math.exp(b - m))
        score = exps[CANDIDA_INDEX] / sum(exps)
        return cls(
            score=score,
            logits=(a, b),
            embedding=np.asarray(embedding, dtype=np.float32),
            tile_id=tile_id,
        )
