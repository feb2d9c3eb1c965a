import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from tqdm_loggable.auto import tqdm

from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import CheckpointError, DatasetError, MetricError, ScreeningError
from candida_screen.core.log import get_logger, log_stage
from candida_screen.infrastructure.runtime import get_device, make_generator, make_loader, seed_everything
from candida_screen.models.classifier import TileClassifier, candida_probability, to_results
from candida_screen.models.encoder import freeze_prefix
from candida_screen.repositories.checkpoint_repository import Checkpoint, from_module, load_pretrained, load_state
from candida_screen.repositories.dataset_repository import TileDataset
from candida_screen.repositories.results_repository import ResultsRepository
from candida_screen.schemas.tile_schema import TileResult
from candida_screen.services.attention import attention_artifacts
from candida_screen.services.augment import AugmentParams, photometric_augment
from candida_screen.services.losses import LossBundle, attention_mining, focus, total_loss, triplet
from candida_screen.services.metrics import evaluate

logger = get_logger("tile")

TRAIN_LOG_COLUMNS = ["step", "l_ce", "l_tri", "l_am", "l_focus", "total"]
VAL_LOG_COLUMNS = ["epoch", "val_ce", "val_auc"]


@dataclass
class TileTrainResult:
    checkpoint: Checkpoint
    train_log: List[Dict[str, float]] = field(default_factory=list)
    val_log: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0


def build_classifier(config: RunConfig) -> TileClassifier:
    """Instancia o classificador de tiles descrito pela configuração"""
    return TileClassifier(
        preset=config.preset,
        tile_size=config.tile_size,
        ssa=config.ssa,
        embed_dim=config.embed_dim,
        depth=config.ssa_depth,
        heads=config.ssa_heads,
        query_grid=config.query_grid,
    )


def training_step(
    model: TileClassifier,
    pixels: torch.Tensor,
    labels: torch.Tensor,
    config: RunConfig,
    generator: Optional[torch.Generator] = None,
    augment: Optional[AugmentParams] = None,
) -> LossBundle:
    """
    Calcula o objetivo de um lote.

    I -> I_aug; logits e F_aug de I_aug; máscara M a partir dos tokens de
    I_aug; I_masked = apply_mask(I, M); F_orig e F_masked pela mesma rede.
    Sem CL (ou alpha 0) os termos contrastivos valem zero.
    """
    augment = AugmentParams().scaled(config.augment_strength) if augment is None else augment
    augmented = photometric_augment(pixels, generator, augment)
    out_aug = model(augmented)

    zero = out_aug.logits.sum() * 0.0
    l_tri = l_am = l_focus = zero
    alpha = config.alpha if config.cl else 0.0
    if config.cl:
        artifacts = attention_artifacts(
            out_aug.tokens, model.attention_fc, pixels, config.mask_sigma, config.mask_scale, config.mask_mode
        )
        out_orig = model(pixels)
        out_masked = model(artifacts.masked)
        selected = labels == 1 if config.cl_positive_only else torch.ones_like(labels, dtype=torch.bool)
        if bool(selected.any()):
            f_aug = F.normalize(out_aug.embedding[selected], dim=-1)
            f_orig = F.normalize(out_orig.embedding[selected], dim=-1)
            f_masked = F.normalize(out_masked.embedding[selected], dim=-1)
            l_tri = triplet(f_aug, f_orig, f_masked, config.margin)
            l_am = attention_mining(candida_probability(out_masked.logits)[selected])
            l_focus = focus(artifacts.mask[selected])
    return total_loss(out_aug.logits, labels, l_tri, l_am, l_focus, alpha)


class TileController:
    """
    Controller do classificador de tiles: treino, predição e carga de checkpoints
    """

    @staticmethod
    def prepare_model(config: RunConfig, detector_encoder: Optional[Checkpoint] = None) -> TileClassifier:
        """
        Cria o modelo; com PT carrega o encoder pré-treinado e congela o prefixo.

        Raises:
            CheckpointError: PT ativo sem checkpoint de detector
        """
        model = build_classifier(config)
        if config.pt:
            if detector_encoder is None:
                raise CheckpointError("PT ativo exige o checkpoint do encoder pré-treinado por detecção (--ckpt)")
            load_pretrained(model.encoder, detector_encoder)
            freeze_prefix(model.encoder, config.freeze_stages)
        return model

    @staticmethod
    def predict(model: TileClassifier, dataset: TileDataset, batch_size: int = 16) -> Tuple[List[TileResult], np.ndarray]:
        """TileResults (modo de inferência) e rótulos do dataset"""
        results: List[TileResult] = []
        was_training = model.training
        model.eval()
        device = next(model.parameters()).device
        try:
            with torch.no_grad():
                for start in range(0, len(dataset), batch_size):
                    indices = range(start, min(start + batch_size, len(dataset)))
                    pixels = torch.stack([dataset.pixels(i) for i in indices]).to(device)
                    out = model(pixels)
                    ids = [dataset.tile_ids[i] for i in indices]
                    results.extend(to_results(out.logits, out.embedding, ids))
        finally:
            model.train(was_training)
        return results, np.asarray(dataset.labels(), dtype=np.int64)

    @staticmethod
    def predict_pixels(model: TileClassifier, pixels: Sequence[torch.Tensor], tile_ids: Sequence[str], batch_size: int = 16) -> List[TileResult]:
        results: List[TileResult] = []
        was_training = model.training
        model.eval()
        try:
            with torch.no_grad():
                for start in range(0, len(pixels), batch_size):
                    batch = torch.stack(list(pixels[start:start + batch_size]))
                    out = model(batch)
                    results.extend(to_results(out.logits, out.embedding, tile_ids[start:start + batch_size]))
        finally:
            model.train(was_training)
        return results

    @staticmethod
    def _validate(model: TileClassifier, dataset: TileDataset, batch_size: int) -> Tuple[float, float]:
        results, labels = TileController.predict(model, dataset, batch_size)
        logits = torch.tensor([r.logits for r in results], dtype=torch.float64)
        val_ce = float(F.cross_entropy(logits, torch.as_tensor(labels)))
        try:
            val_auc = evaluate([r.score for r in results], labels).auc
        except MetricError:
            val_auc = math.nan
        return val_ce, val_auc

    @staticmethod
    def train_tile_classifier(
        train_set: TileDataset,
        config: RunConfig,
        val_set: Optional[TileDataset] = None,
        detector_encoder: Optional[Checkpoint] = None,
        out_dir: Optional[Path] = None,
    ) -> TileTrainResult:
        """
        Treina o classificador de tiles com orientação por atenção.

        Args:
            train_set: Tiles de treino
            config: Configuração (flags PT/SSA/CL, alpha, epochs, lr, batch_tile)
            val_set: Tiles de validação para seleção do checkpoint (melhor AUC)
            detector_encoder: Checkpoint do encoder pré-treinado (obrigatório com PT)
            out_dir: Diretório para train_log.csv e val_log.csv (opcional)

        Returns:
            TileTrainResult: Checkpoint selecionado e logs

        Raises:
            CheckpointError: PT sem checkpoint
            DatasetError: conjunto de treino vazio
        """
        if len(train_set) == 0:
            raise DatasetError("Conjunto de treino vazio")
        try:
            seed_everything(config.seed)
            device = get_device(config.device)
            model = TileController.prepare_model(config, detector_encoder).to(device)
            parameters = [p for p in model.parameters() if p.requires_grad]
            optimizer = torch.optim.Adam(parameters, lr=config.lr)
            loader = make_loader(train_set, config.batch_tile, config.seed, num_workers=config.num_workers)
            generator = make_generator(config.seed + 1)
            augment = AugmentParams().scaled(config.augment_strength)

            train_log: List[Dict[str, float]] = []
            val_log: List[Dict[str, float]] = []
            best_state = copy.deepcopy(model.state_dict())
            best_auc, best_epoch = -math.inf, 0
            step = 0

            with log_stage("train-tile", tiles=len(train_set), epochs=config.epochs, pt=config.pt, ssa=config.ssa, cl=config.cl):
                for epoch in tqdm(range(1, config.epochs + 1), desc="Treino do classificador"):
                    model.train()
                    for pixels, labels, _ in loader:
                        bundle = training_step(model, pixels.to(device), labels.to(device), config, generator, augment)
                        optimizer.zero_grad()
                        bundle.total.backward()
                        optimizer.step()
                        step += 1
                        train_log.append({"step": step, **bundle.as_floats()})

                    if val_set is not None and len(val_set):
                        val_ce, val_auc = TileController._validate(model, val_set, config.batch_tile)
                        val_log.append({"epoch": epoch, "val_ce": val_ce, "val_auc": val_auc})
                        logger.info(f"Época {epoch}: val_ce={val_ce:.6f} val_auc={val_auc:.4f}")
                        if not math.isnan(val_auc) and val_auc > best_auc:
                            best_auc, best_epoch = val_auc, epoch
                            best_state = copy.deepcopy(model.state_dict())
                    else:
                        best_state, best_epoch = copy.deepcopy(model.state_dict()), epoch

            model.load_state_dict(best_state)
            if out_dir is not None:
                results = ResultsRepository(out_dir)
                results.write_table("train_log.csv", train_log, TRAIN_LOG_COLUMNS)
                results.write_table("val_log.csv", val_log, VAL_LOG_COLUMNS)

            checkpoint = from_module(model, "tile_classifier", seed=config.seed, config=config.model_dump(mode="json"))
            return TileTrainResult(checkpoint=checkpoint, train_log=train_log, val_log=val_log, best_epoch=best_epoch)

        except ScreeningError:
            raise
        except Exception as e:
            raise RuntimeError(f"Erro no treino do classificador de tiles: {e}") from e

    @staticmethod
    def load_classifier(checkpoint: Checkpoint, prefix: str = "") -> TileClassifier:
        """
        Reconstrói o classificador a partir do checkpoint (tile_classifier ou wsi_pipeline)

        Raises:
            CheckpointError: configuração ausente ou arquitetura divergente
        """
        stored = dict(checkpoint.metadata.config)
        if not stored:
            raise CheckpointError("Checkpoint sem configuração para reconstruir o classificador")
        config = RunConfig.load(None, **stored)
        model = build_classifier(config)
        if prefix:
            expected = checkpoint.extra.get("tile_architecture", model.architecture)
        else:
            expected = checkpoint.architecture
        if expected != model.architecture:
            raise CheckpointError(f"Arquitetura {expected} difere de {model.architecture}")
        load_state(model, checkpoint.subset(prefix) if prefix else checkpoint.arrays)
        return model.eval()
