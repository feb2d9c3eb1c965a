from pathlib import Path
from typing import List, Optional, Sequence

from candida_screen.controllers.tile_controller import TileController
from candida_screen.controllers.wsi_controller import TILE_PREFIX
from candida_screen.core.exceptions import DatasetError
from candida_screen.core.log import get_logger, log_stage
from candida_screen.repositories.checkpoint_repository import Checkpoint
from candida_screen.repositories.dataset_repository import DatasetRepository, to_tensor
from candida_screen.schemas.synth_schema import CANDIDA_INDEX, Label
from candida_screen.services.attention import grad_cam
from candida_screen.services.tiling import save_overlay

logger = get_logger("cam")

DEFAULT_CAM_TILES = 8


class CamController:
    """
    Controller da visualização Grad-CAM
    """

    @staticmethod
    def select_tiles(repository: DatasetRepository, tile_ids: Optional[Sequence[str]], limit: int = DEFAULT_CAM_TILES) -> List[str]:
        """Tiles pedidos ou, por padrão, os primeiros tiles positivos do pool"""
        annotations = repository.read_annotations()
        if tile_ids:
            missing = [t for t in tile_ids if t not in annotations]
            if missing:
                raise DatasetError(f"Tiles não encontrados: {', '.join(missing)}")
            return list(tile_ids)
        positives = [t for t in repository.pool_ids() if annotations[t].label is Label.POSITIVE]
        return positives[:limit]

    @staticmethod
    def export(
        checkpoint: Checkpoint,
        repository: DatasetRepository,
        out_dir: Path,
        tile_ids: Optional[Sequence[str]] = None,
        target_class: int = CANDIDA_INDEX,
    ) -> List[Path]:
        """
        Grava <out>/cam/<tile_id>.png com o Grad-CAM sobreposto ao tile

        Args:
            checkpoint: tile_classifier ou wsi_pipeline
            repository: Dataset com os tiles
            out_dir: Diretório da execução
            tile_ids: Tiles a visualizar (padrão: primeiros positivos)
            target_class: Classe alvo do gradiente
        """
        prefix = TILE_PREFIX if checkpoint.metadata.kind == "wsi_pipeline" else ""
        model = TileController.load_classifier(checkpoint, prefix=prefix)
        selected = CamController.select_tiles(repository, tile_ids)
        paths = []
        with log_stage("cam", tiles=len(selected), target=target_class):
            for tile_id in selected:
                tile = repository.read_tile(tile_id)
                heatmap = grad_cam(model, to_tensor(tile.pixels), target_class)
                paths.append(save_overlay(tile.pixels, heatmap.numpy(), Path(out_dir) / "cam" / f"{tile_id}.png"))
        logger.info(f"{len(paths)} mapas Grad-CAM gravados em {Path(out_dir) / 'cam'}")
        return paths
