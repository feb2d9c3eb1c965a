"""
Layout do dataset sintético em disco:

    <root>/tiles/<tile_id>.png
    <root>/annotations.csv   (tile_id,label,x_min,y_min,x_max,y_max; uma linha por caixa)
    <root>/slides/<slide_id>.json
"""
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from torch.utils.data import Dataset

from candida_screen.core.exceptions import DatasetError
from candida_screen.repositories.base_repository import BaseRepository
from candida_screen.schemas.synth_schema import Box, Label, SlideManifest, TileImage
from candida_screen.services.tiling import load_image, save_image

ANNOTATION_COLUMNS = ["tile_id", "label", "x_min", "y_min", "x_max", "y_max"]
BOX_COLUMNS = ANNOTATION_COLUMNS[2:]


@dataclass
class Annotation:
    label: Label
    boxes: List[Box] = field(default_factory=list)


class DatasetRepository(BaseRepository):
    """
    Repository responsável por gravar e ler o dataset de tiles e lâminas.
    """

    TILES_DIR = "tiles"
    SLIDES_DIR = "slides"
    ANNOTATIONS = "annotations.csv"

    def tile_path(self, tile_id: str) -> Path:
        return self.path(self.TILES_DIR, f"{tile_id}.png")

    def write_tile(self, tile: TileImage) -> Path:
        self.ensure_dir(self.TILES_DIR)
        return save_image(tile.pixels, self.tile_path(tile.tile_id))

    def write_annotations(self, tiles: Iterable[TileImage]) -> Path:
        """Grava a tabela de anotações (linha só com rótulo para tiles negativos)"""
        rows = []
        for tile in tiles:
            if tile.boxes:
                rows.extend([tile.tile_id, tile.label.value, *box] for box in tile.boxes)
            else:
                rows.append([tile.tile_id, tile.label.value, None, None, None, None])
        frame = pd.DataFrame(rows, columns=ANNOTATION_COLUMNS)
        frame[BOX_COLUMNS] = frame[BOX_COLUMNS].astype("Int64")
        target = self.path(self.ANNOTATIONS)
        self.ensure_dir()
        frame.to_csv(target, index=False, lineterminator="\n")
        return target

    def write_manifest(self, manifest: SlideManifest) -> Path:
        return self.write_json(f"{self.SLIDES_DIR}/{manifest.slide_id}.json", manifest.model_dump(mode="json"))

    def read_annotations(self) -> "OrderedDict[str, Annotation]":
        """
        Lê a tabela de anotações agrupando as caixas por tile, na ordem do arquivo

        Raises:
            DatasetError: tabela ausente ou com colunas inesperadas
        """
        target = self.path(self.ANNOTATIONS)
        if not target.is_file():
            raise DatasetError(f"Tabela de anotações {target} não encontrada")
        frame = pd.read_csv(target, dtype={"tile_id": str, "label": str})
        if list(frame.columns) != ANNOTATION_COLUMNS:
            raise DatasetError(f"Colunas inesperadas em {target}: {list(frame.columns)}")
        frame[BOX_COLUMNS] = frame[BOX_COLUMNS].astype("Int64")

        annotations: "OrderedDict[str, Annotation]" = OrderedDict()
        for row in frame.itertuples(index=False):
            entry = annotations.setdefault(row.tile_id, Annotation(label=Label(row.label)))
            if not pd.isna(row.x_min):
                entry.boxes.append((int(row.x_min), int(row.y_min), int(row.x_max), int(row.y_max)))
        return annotations

    def read_tile(self, tile_id: str, annotation: Annotation = None) -> TileImage:
        pixels = load_image(self.tile_path(tile_id))
        if annotation is None:
            return TileImage(pixels=pixels, tile_id=tile_id)
        return TileImage(pixels=pixels, label=annotation.label, boxes=annotation.boxes, tile_id=tile_id)

    def read_manifest(self, source: Union[str, Path]) -> SlideManifest:
        """Lê um manifesto pelo slide_id ou por caminho de arquivo"""
        path = Path(source)
        if not path.suffix:
            path = self.path(self.SLIDES_DIR, f"{source}.json")
        if not path.is_file():
            raise DatasetError(f"Manifesto {path} não encontrado")
        try:
            return SlideManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise DatasetError(f"Manifesto inválido {path}: {e}") from e

    def list_manifests(self) -> List[SlideManifest]:
        directory = self.path(self.SLIDES_DIR)
        if not directory.is_dir():
            return []
        return [self.read_manifest(p) for p in sorted(directory.glob("*.json"))]

    def pool_ids(self) -> List[str]:
        """Tiles avulsos (fora de qualquer lâmina), na ordem da tabela"""
        slide_tiles = {t for m in self.list_manifests() for t in m.tile_ids}
        return [t for t in self.read_annotations() if t not in slide_tiles]


def to_tensor(pixels: np.ndarray) -> torch.Tensor:
    """H×W×3 em [0,1] -> tensor float32 3×H×W"""
    return torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float32))


class TileDataset(Dataset):
    """Tiles rotulados para o classificador: (pixels 3×H×W, rótulo 0/1, índice)"""

    def __init__(self, repository: DatasetRepository, tile_ids: Sequence[str], annotations: Dict[str, Annotation] = None):
        self.repository = repository
        self.tile_ids = list(tile_ids)
        self.annotations = annotations if annotations is not None else repository.read_annotations()
        missing = [t for t in self.tile_ids if t not in self.annotations]
        if missing:
            raise DatasetError(f"Tiles sem anotação: {', '.join(missing[:5])}")
        self._cache: Dict[int, torch.Tensor] = {}

    def __len__(self) -> int:
        return len(self.tile_ids)

    def label(self, index: int) -> int:
        return self.annotations[self.tile_ids[index]].label.index

    def labels(self) -> List[int]:
        return [self.label(i) for i in range(len(self))]

    def pixels(self, index: int) -> torch.Tensor:
        if index not in self._cache:
            self._cache[index] = to_tensor(load_image(self.repository.tile_path(self.tile_ids[index])))
        return self._cache[index]

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, int, int]:
        return self.pixels(index), self.label(index), index


class DetectionDataset(TileDataset):
    """Tiles com caixas para o pré-treino: (pixels, caixas N×4, índice)"""

    def __init__(self, repository: DatasetRepository, tile_ids: Sequence[str], annotations: Dict[str, Annotation] = None):
        super().__init__(repository, tile_ids, annotations)
        self.tile_ids = [t for t in self.tile_ids if self.annotations[t].boxes]
        if not self.tile_ids:
            raise DatasetError("O dataset de detecção não possui nenhuma caixa positiva")

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, np.ndarray, int]:
        boxes = np.asarray(self.annotations[self.tile_ids[index]].boxes, dtype=np.float64)
        return self.pixels(index), boxes, index


def detection_collate(batch):
    pixels = torch.stack([item[0] for item in batch])
    boxes = [item[1] for item in batch]
    indices = [item[2] for item in batch]
    return pixels, boxes, indices
