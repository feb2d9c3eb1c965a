"""
Recorte de lâminas em tiles e IO de imagens (PNG via Pillow).
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from candida_screen.core.exceptions import DatasetError, ParameterError, ShapeError
from candida_screen.schemas.synth_schema import Box, Label, TileImage

BACKGROUND_VALUE = 1.0
OVERLAY_ALPHA = 0.5


@dataclass
class TileGrid:
    """Grade de recorte: tamanho, passo e origem (linha, coluna) de cada tile em ordem row-major"""
    tile_size: int
    stride: int
    offsets: List[Tuple[int, int]] = field(default_factory=list)
    n_rows: int = 0
    n_cols: int = 0

    def __len__(self) -> int:
        return len(self.offsets)


def tile_count(extent: int, tile_size: int, stride: int) -> int:
    """Número de tiles ao longo de um eixo: ceil((extent-tile)/stride + 1), mínimo 1"""
    if extent <= tile_size:
        return 1
    return int(math.ceil((extent - tile_size) / stride + 1))


def make_grid(height: int, width: int, tile_size: int, stride: Optional[int] = None) -> TileGrid:
    """Calcula a grade de recorte cobrindo toda a extensão da imagem"""
    stride = tile_size if stride is None else stride
    if tile_size <= 0:
        raise ParameterError(f"tile_size deve ser positivo, recebido {tile_size}")
    if stride <= 0:
        raise ParameterError(f"stride deve ser positivo, recebido {stride}")
    n_rows = tile_count(height, tile_size, stride)
    n_cols = tile_count(width, tile_size, stride)
    offsets = [(r * stride, c * stride) for r in range(n_rows) for c in range(n_cols)]
    return TileGrid(tile_size=tile_size, stride=stride, offsets=offsets, n_rows=n_rows, n_cols=n_cols)


def _clip_box(box: Box, top: int, left: int, tile_size: int) -> Optional[Box]:
    x_min, y_min, x_max, y_max = box
    cx_min, cy_min = max(x_min - left, 0), max(y_min - top, 0)
    cx_max, cy_max = min(x_max - left, tile_size), min(y_max - top, tile_size)
    if cx_min >= cx_max or cy_min >= cy_max:
        return None
    return int(cx_min), int(cy_min), int(cx_max), int(cy_max)


def crop_slide(
    image: np.ndarray,
    tile_size: int,
    stride: Optional[int] = None,
    boxes: Optional[Sequence[Box]] = None,
    prefix: str = "tile",
) -> Tuple[List[TileImage], TileGrid]:
    """
    Recorta uma imagem de lâmina em tiles de tamanho fixo.

    Tiles de borda são completados com fundo branco (1.0). Com boxes
    informadas, cada caixa é recortada para o tile e o tile recebe rótulo
    positivo se contiver alguma; sem anotação o rótulo fica None.

    Args:
        image: Array H×W×3 em [0, 1]
        tile_size: Lado do tile em pixels
        stride: Passo entre origens (padrão: tile_size)
        boxes: Caixas de hifas em coordenadas da lâmina (opcional)
        prefix: Prefixo dos identificadores "<prefix>_r<linha>_c<coluna>"

    Returns:
        Tuple[List[TileImage], TileGrid]: Tiles em ordem row-major e a grade usada

    Raises:
        ParameterError: tile_size ou stride não positivos
        ShapeError: imagem fora do formato H×W×3
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"Imagem deve ter formato H×W×3, recebido {image.shape}")
    height, width = image.shape[:2]
    grid = make_grid(height, width, tile_size, stride)

    tiles: List[TileImage] = []
    for index, (top, left) in enumerate(grid.offsets):
        row, col = divmod(index, grid.n_cols)
        patch = np.full((tile_size, tile_size, 3), BACKGROUND_VALUE, dtype=image.dtype)
        crop = image[top:top + tile_size, left:left + tile_size]
        patch[:crop.shape[0], :crop.shape[1]] = crop

        label = None
        tile_boxes: List[Box] = []
        if boxes is not None:
            # a parte da caixa que cai no preenchimento é descartada
            limit_h, limit_w = crop.shape[0], crop.shape[1]
            for box in boxes:
                clipped = _clip_box(box, top, left, tile_size)
                if clipped is None:
                    continue
                x_min, y_min, x_max, y_max = clipped
                x_max, y_max = min(x_max, limit_w), min(y_max, limit_h)
                if x_min < x_max and y_min < y_max:
                    tile_boxes.append((x_min, y_min, x_max, y_max))
            label = Label.POSITIVE if tile_boxes else Label.NEGATIVE

        tiles.append(TileImage(pixels=patch, label=label, boxes=tile_boxes, tile_id=f"{prefix}_r{row}_c{col}"))
    return tiles, grid


def reassemble(tiles: Sequence[Union[TileImage, np.ndarray]], grid: TileGrid, height: int, width: int) -> np.ndarray:
    """Reconstrói a imagem a partir de tiles de um recorte sem sobreposição"""
    if len(tiles) != len(grid):
        raise ShapeError(f"Esperados {len(grid)} tiles, recebidos {len(tiles)}")
    if grid.stride != grid.tile_size:
        raise ParameterError("reassemble exige stride igual a tile_size")
    first = tiles[0].pixels if isinstance(tiles[0], TileImage) else tiles[0]
    canvas = np.empty((grid.n_rows * grid.tile_size, grid.n_cols * grid.tile_size, 3), dtype=first.dtype)
    for tile, (top, left) in zip(tiles, grid.offsets):
        pixels = tile.pixels if isinstance(tile, TileImage) else tile
        canvas[top:top + grid.tile_size, left:left + grid.tile_size] = pixels
    return canvas[:height, :width]


def load_image(path: Union[str, Path]) -> np.ndarray:
    """Lê um PNG RGB e retorna float64 H×W×3 em [0, 1]"""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Imagem {path} não encontrada")
    with Image.open(path) as img:
        data = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return data.astype(np.float64) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_image(image: np.ndarray, path: Union[str, Path]) -> Path:
    """Grava uma imagem H×W×3 em [0, 1] como PNG RGB de 8 bits"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")
    return path


def blend_overlay(image: np.ndarray, heatmap: np.ndarray) -> np.ndarray:
    """Mistura o mapa de calor no canal vermelho: R' = R + 0.5·h·(1 − R)"""
    if heatmap.shape != image.shape[:2]:
        raise ShapeError(f"Mapa de calor {heatmap.shape} incompatível com a imagem {image.shape[:2]}")
    out = np.array(image, dtype=np.float64, copy=True)
    h = np.clip(heatmap, 0.0, 1.0)
    out[..., 0] = out[..., 0] + OVERLAY_ALPHA * h * (1.0 - out[..., 0])
    return out


def save_overlay(image: np.ndarray, heatmap: np.ndarray, path: Union[str, Path]) -> Path:
    """Grava a sobreposição do mapa de calor (canal vermelho, alfa 0.5) como PNG"""
    return save_image(blend_overlay(image, heatmap), path)
