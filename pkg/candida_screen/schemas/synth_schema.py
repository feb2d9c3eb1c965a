from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Box = Tuple[int, int, int, int]

# Índice da classe candida nas saídas de 2 logits
CANDIDA_INDEX = 1


class Label(str, Enum):
    """Rótulo binário de tile ou lâmina"""
    NEGATIVE = "negative"
    POSITIVE = "positive"

    @property
    def index(self) -> int:
        return CANDIDA_INDEX if self is Label.POSITIVE else 1 - CANDIDA_INDEX

    @classmethod
    def from_index(cls, value: int) -> "Label":
        if value not in (0, 1):
            raise ValueError(f"Rótulo inválido: {value}")
        return cls.POSITIVE if value == CANDIDA_INDEX else cls.NEGATIVE


class StyleParams(BaseModel):
    """
    Estilo de coloração de uma lâmina (diferença de estilo entre WSIs).

    Uma lâmina possui exatamente um StyleParams compartilhado por todos os seus tiles.
    """
    hue_shift: float = Field(0.0, ge=-0.1, le=0.1, description="Rotação de matiz")
    contrast: float = Field(1.0, ge=0.7, le=1.3, description="Fator de contraste em torno de 0.5")
    brightness: float = Field(1.0, ge=0.8, le=1.2, description="Fator multiplicativo de brilho")
    background_tint: Tuple[float, float, float] = Field(
        (0.93, 0.91, 0.95), description="Cor RGB do fundo da lâmina"
    )

    @field_validator("background_tint")
    @classmethod
    def check_tint(cls, v):
        """Cada canal da tonalidade deve estar em [0, 1]"""
        if any(not 0.0 <= c <= 1.0 for c in v):
            raise ValueError("background_tint deve ter canais em [0, 1]")
        return tuple(float(c) for c in v)

    model_config = {
        "frozen": True,
        "json_schema_extra": {
            "example": {
                "hue_shift": 0.03,
                "contrast": 1.1,
                "brightness": 0.95,
                "background_tint": [0.93, 0.91, 0.95]
            }
        }
    }


class TileImage(BaseModel):
    """
    Imagem de um tile (H×W×3 em [0,1]) com rótulo e caixas das hifas.

    label=None indica um recorte sem anotação (por exemplo, vindo de crop_slide).
    """
    pixels: np.ndarray
    label: Optional[Label] = None
    boxes: List[Box] = Field(default_factory=list)
    tile_id: str = ""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("pixels")
    @classmethod
    def check_pixels(cls, v: np.ndarray) -> np.ndarray:
        """Valida formato H×W×3 e intervalo [0, 1]"""
        if not isinstance(v, np.ndarray) or v.ndim != 3 or v.shape[2] != 3:
            raise ValueError("pixels deve ser um array H×W×3")
        if v.size and (np.nanmin(v) < 0.0 or np.nanmax(v) > 1.0):
            raise ValueError("pixels deve estar no intervalo [0, 1]")
        return v

    @model_validator(mode="after")
    def check_boxes(self) -> "TileImage":
        """Rótulo positivo ⟺ caixas não vazias; caixas dentro da imagem"""
        height, width = self.pixels.shape[:2]
        for x_min, y_min, x_max, y_max in self.boxes:
            if not (x_min < x_max and y_min < y_max):
                raise ValueError(f"Caixa degenerada: {(x_min, y_min, x_max, y_max)}")
            if x_min < 0 or y_min < 0 or x_max > width or y_max > height:
                raise ValueError(f"Caixa fora da imagem: {(x_min, y_min, x_max, y_max)}")
        if self.label is not None and (self.label is Label.POSITIVE) != bool(self.boxes):
            raise ValueError("Tile positivo deve ter caixas e tile negativo não pode ter caixas")
        return self

    @property
    def size(self) -> Tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


class SlideManifest(BaseModel):
    """
    Manifesto de uma lâmina sintética: lista ordenada de tiles e rótulo da lâmina.
    """
    slide_id: str = Field(..., min_length=1)
    slide_label: Label
    tile_ids: List[str] = Field(..., min_length=1)
    style: StyleParams

    model_config = {
        "json_schema_extra": {
            "example": {
                "slide_id": "s000",
                "slide_label": "positive",
                "tile_ids": ["s000_t000", "s000_t001"],
                "style": StyleParams.model_config["json_schema_extra"]["example"]
            }
        }
    }


class SynthConfig(BaseModel):
    """
    Parâmetros de geração do dataset sintético.
    """
    out_dir: Path
    n_tiles: int = Field(100, ge=0, description="Tiles avulsos para classificação/detecção")
    tile_size: int = Field(128, ge=64)
    positive_ratio: float = Field(0.5, ge=0, le=1)
    n_slides: int = Field(0, ge=0)
    tiles_per_slide: int = Field(20, ge=1)
    slide_positive_ratio: float = Field(0.5, ge=0, le=1)
    positive_tiles_per_slide: int = Field(2, ge=1, description="Tiles positivos em lâminas positivas")
    seed: int = Field(0, ge=0)
    style: Optional[StyleParams] = Field(None, description="Estilo fixo para todos os tiles (None sorteia por lâmina)")

    @model_validator(mode="after")
    def check_slide_counts(self) -> "SynthConfig":
        if self.positive_tiles_per_slide > self.tiles_per_slide:
            raise ValueError("positive_tiles_per_slide não pode exceder tiles_per_slide")
        return self
