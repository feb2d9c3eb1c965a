from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm_loggable.auto import tqdm

from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import DatasetError, ScreeningError
from candida_screen.core.log import get_logger, log_stage
from candida_screen.infrastructure.runtime import get_device, make_loader, seed_everything
from candida_screen.models.detector import Detector
from candida_screen.models.encoder import ResidualEncoder
from candida_screen.repositories.checkpoint_repository import (
    Checkpoint,
    from_module,
    load_pretrained,
    load_state,
    state_arrays,
)
from candida_screen.repositories.dataset_repository import DetectionDataset, detection_collate
from candida_screen.repositories.results_repository import ResultsRepository
from candida_screen.schemas.checkpoint_schema import CheckpointMetadata
from candida_screen.services.anchors import (
    AnchorSet,
    DetectionTargets,
    assign_anchors,
    box_loss,
    detect,
    focal_loss_with_logits,
    generate_anchors,
)

logger = get_logger("detector")

DETECT_LOG_COLUMNS = ["epoch", "focal", "box", "total"]


@dataclass
class DetectorResult:
    """Checkpoint do encoder, checkpoint da cabeça (FPN + sub-redes) e log por época"""
    encoder: Checkpoint
    head: Checkpoint
    log: List[Dict[str, float]] = field(default_factory=list)


class DetectorController:
    """
    Controller do pré-treino por detecção e da inferência do detector
    """

    @staticmethod
    def _targets(dataset: DetectionDataset, anchors: AnchorSet, config: RunConfig) -> List[DetectionTargets]:
        targets = []
        for index in range(len(dataset)):
            _, boxes, _ = dataset[index]
            targets.append(assign_anchors(anchors, boxes, config.iou_pos, config.iou_neg))
        return targets

    @staticmethod
    def train_detector(
        dataset: DetectionDataset,
        config: RunConfig,
        out_dir: Optional[Path] = None,
    ) -> DetectorResult:
        """
        Treina encoder + detector nos tiles com caixas.

        Args:
            dataset: Tiles com caixas de hifas
            config: Configuração (detect_epochs, lr, batch_detect, limiares, focal)
            out_dir: Diretório para detect_log.csv (opcional)

        Returns:
            DetectorResult: Checkpoint do encoder (usado no PT) e da cabeça

        Raises:
            DatasetError: dataset sem caixas
        """
        if len(dataset) == 0:
            raise DatasetError("O dataset de detecção não possui nenhuma caixa positiva")
        try:
            seed_everything(config.seed)
            device = get_device(config.device)
            detector = Detector(ResidualEncoder(config.preset)).to(device)
            size = tuple(dataset[0][0].shape[-2:])
            anchors = generate_anchors(size)
            targets = DetectorController._targets(dataset, anchors, config)

            optimizer = torch.optim.Adam(detector.parameters(), lr=config.lr)
            loader = make_loader(
                dataset, config.batch_detect, config.seed, num_workers=config.num_workers, collate_fn=detection_collate
            )
            log: List[Dict[str, float]] = []

            with log_stage("pretrain-detect", tiles=len(dataset), epochs=config.detect_epochs):
                for epoch in tqdm(range(1, config.detect_epochs + 1), desc="Pré-treino de detecção"):
                    detector.train()
                    sums = np.zeros(3)
                    batches = 0
                    for pixels, _, indices in loader:
                        labels = torch.as_tensor(np.stack([targets[i].labels for i in indices]), device=device)
                        regression = torch.as_tensor(
                            np.stack([targets[i].regression for i in indices]), dtype=torch.float32, device=device
                        )
                        cls_logits, offsets = detector(pixels.to(device))
                        focal = focal_loss_with_logits(cls_logits, labels, config.focal_alpha, config.focal_gamma)
                        regress = box_loss(offsets, regression, labels)
                        total = focal + regress
                        optimizer.zero_grad()
                        total.backward()
                        optimizer.step()
                        sums += [float(focal), float(regress), float(total)]
                        batches += 1
                    focal_mean, box_mean, total_mean = sums / max(batches, 1)
                    log.append({"epoch": epoch, "focal": focal_mean, "box": box_mean, "total": total_mean})
                    logger.info(f"Época {epoch}: focal={focal_mean:.6f} box={box_mean:.6f} total={total_mean:.6f}")

            if out_dir is not None:
                ResultsRepository(out_dir).write_table("detect_log.csv", log, DETECT_LOG_COLUMNS)

            echo = config.model_dump(mode="json")
            encoder_ckpt = from_module(detector.encoder, "encoder", seed=config.seed, config=echo)
            head_ckpt = Checkpoint(
                arrays=state_arrays(detector.head_state()),
                metadata=CheckpointMetadata(
                    kind="detector", architecture=detector.architecture, seed=config.seed, config=echo
                ),
            )
            return DetectorResult(encoder=encoder_ckpt, head=head_ckpt, log=log)

        except ScreeningError:
            raise
        except Exception as e:
            raise RuntimeError(f"Erro no pré-treino de detecção: {e}") from e

    @staticmethod
    def load_detector(encoder_ckpt: Checkpoint, head_ckpt: Checkpoint, preset: str) -> Detector:
        """Remonta o detector a partir dos dois checkpoints"""
        detector = Detector(ResidualEncoder(preset))
        load_pretrained(detector.encoder, encoder_ckpt)
        head = {name: array for name, array in head_ckpt.arrays.items()}
        head.update({f"encoder.{name}": array for name, array in encoder_ckpt.arrays.items()})
        load_state(detector, head)
        return detector.eval()

    @staticmethod
    def detection_scores(
        detector: Detector,
        pixels: Sequence[torch.Tensor],
        score_threshold: float = 0.5,
        nms_iou: float = 0.5,
    ) -> List[float]:
        """Score de detecção por tile: maior confiança retida após NMS (0 sem detecções)"""
        scores = []
        detector.eval()
        with torch.no_grad():
            for tile in pixels:
                anchors = generate_anchors(tuple(tile.shape[-2:]))
                cls_logits, offsets = detector(tile.unsqueeze(0))
                scores.append(detect(anchors, cls_logits[0], offsets[0], score_threshold, nms_iou).tile_score)
        return scores
