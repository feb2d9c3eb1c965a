import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.utils.data import TensorDataset
from tqdm_loggable.auto import tqdm

from candida_screen.controllers.tile_controller import TileController
from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import CheckpointError, DatasetError, MetricError, ScreeningError
from candida_screen.core.log import get_logger, log_stage
from candida_screen.infrastructure.runtime import make_loader, seed_everything
from candida_screen.models.aggregator import MLPAggregator, TopKTransformer, aggregate, selection_tensors
from candida_screen.models.classifier import TileClassifier
from candida_screen.repositories.checkpoint_repository import Checkpoint, load_state, state_arrays
from candida_screen.repositories.dataset_repository import DatasetRepository, to_tensor
from candida_screen.repositories.results_repository import ResultsRepository
from candida_screen.schemas.checkpoint_schema import CheckpointMetadata
from candida_screen.schemas.synth_schema import SlideManifest
from candida_screen.schemas.wsi_schema import Verdict, WSIBundle
from candida_screen.services.aggregation import aggregate_threshold, rank_topk
from candida_screen.services.metrics import evaluate
from candida_screen.services.tiling import crop_slide

logger = get_logger("wsi")

WSI_LOG_COLUMNS = ["epoch", "train_ce", "val_auc"]
TILE_PREFIX = "tile."
AGGREGATOR_PREFIX = "aggregator."


@dataclass
class WSITrainResult:
    checkpoint: Checkpoint
    aggregator: Optional[nn.Module]
    log: List[Dict[str, float]] = field(default_factory=list)


def build_aggregator(config: RunConfig, in_dim: int) -> Optional[nn.Module]:
    """Agregador configurado; None para o baseline por limiar"""
    if config.aggregator == "transformer":
        return TopKTransformer(in_dim, config.k, config.embed_dim, config.agg_depth, config.agg_heads)
    if config.aggregator == "mlp":
        return MLPAggregator(in_dim, config.k)
    return None


class WSIController:
    """
    Controller da decisão por lâmina: pontuação dos tiles, treino do agregador e inferência
    """

    @staticmethod
    def score_manifests(
        model: TileClassifier,
        repository: DatasetRepository,
        manifests: Sequence[SlideManifest],
        batch_size: int = 16,
    ) -> List[WSIBundle]:
        """Pontua os tiles de cada lâmina com a rede de tiles congelada"""
        bundles = []
        for manifest in tqdm(manifests, desc="Pontuando lâminas"):
            if not manifest.tile_ids:
                raise DatasetError(f"Lâmina {manifest.slide_id} sem tiles")
            pixels = [to_tensor(repository.read_tile(t).pixels) for t in manifest.tile_ids]
            results = TileController.predict_pixels(model, pixels, manifest.tile_ids, batch_size)
            bundles.append(WSIBundle(slide_id=manifest.slide_id, tile_results=results, label=manifest.slide_label.index))
        return bundles

    @staticmethod
    def decide(bundle: WSIBundle, aggregator: Optional[nn.Module], config: RunConfig) -> Verdict:
        if not bundle.tile_results:
            raise DatasetError(f"Lâmina {bundle.slide_id} sem tiles")
        if aggregator is None:
            return aggregate_threshold(bundle.tile_results, config.k, config.tau)
        verdict, _ = aggregate(aggregator, rank_topk(bundle.tile_results, config.k))
        return verdict

    @staticmethod
    def _val_auc(bundles: Sequence[WSIBundle], aggregator: nn.Module, config: RunConfig) -> float:
        scores = [WSIController.decide(b, aggregator, config).score for b in bundles]
        try:
            return evaluate(scores, [b.label for b in bundles]).auc
        except MetricError:
            return math.nan

    @staticmethod
    def train_wsi(
        bundles: Sequence[WSIBundle],
        tile_checkpoint: Checkpoint,
        config: RunConfig,
        val_bundles: Optional[Sequence[WSIBundle]] = None,
        out_dir: Optional[Path] = None,
    ) -> WSITrainResult:
        """
        Treina o agregador de lâmina sobre resultados de tiles já calculados.

        A rede de tiles não participa da otimização; o checkpoint final
        contém os arrays da rede de tiles (prefixo "tile.") e do agregador
        (prefixo "aggregator.").

        Raises:
            DatasetError: lâmina sem tiles ou sem rótulo
        """
        if not bundles:
            raise DatasetError("Nenhuma lâmina para treino")
        for bundle in bundles:
            if not bundle.tile_results:
                raise DatasetError(f"Lâmina {bundle.slide_id} sem tiles")
            if bundle.label is None:
                raise DatasetError(f"Lâmina {bundle.slide_id} sem rótulo")
        try:
            seed_everything(config.seed)
            in_dim = len(bundles[0].tile_results[0].embedding)
            aggregator = build_aggregator(config, in_dim)
            log: List[Dict[str, float]] = []

            if aggregator is not None:
                selections = [rank_topk(b.tile_results, config.k) for b in bundles]
                scores, embeddings, padding = selection_tensors(selections)
                labels = torch.tensor([b.label for b in bundles], dtype=torch.int64)
                loader = make_loader(
                    TensorDataset(scores, embeddings, padding, labels), config.batch_wsi, config.seed,
                    num_workers=config.num_workers,
                )
                optimizer = torch.optim.Adam(aggregator.parameters(), lr=config.lr)
                best_state = copy.deepcopy(aggregator.state_dict())
                best_auc = -math.inf

                with log_stage("train-wsi", slides=len(bundles), epochs=config.wsi_epochs, aggregator=config.aggregator):
                    for epoch in tqdm(range(1, config.wsi_epochs + 1), desc="Treino do agregador"):
                        aggregator.train()
                        total, count = 0.0, 0
                        for batch_scores, batch_embeddings, batch_padding, batch_labels in loader:
                            logits = aggregator(batch_scores, batch_embeddings, batch_padding)
                            loss = F.cross_entropy(logits, batch_labels)
                            optimizer.zero_grad()
                            loss.backward()
                            optimizer.step()
                            total += float(loss) * len(batch_labels)
                            count += len(batch_labels)
                        val_auc = math.nan
                        if val_bundles:
                            val_auc = WSIController._val_auc(val_bundles, aggregator, config)
                            if not math.isnan(val_auc) and val_auc > best_auc:
                                best_auc = val_auc
                                best_state = copy.deepcopy(aggregator.state_dict())
                        else:
                            best_state = copy.deepcopy(aggregator.state_dict())
                        log.append({"epoch": epoch, "train_ce": total / count, "val_auc": val_auc})
                aggregator.load_state_dict(best_state)
                aggregator.eval()

            if out_dir is not None:
                ResultsRepository(out_dir).write_table("wsi_log.csv", log, WSI_LOG_COLUMNS)

            return WSITrainResult(
                checkpoint=WSIController.pipeline_checkpoint(tile_checkpoint, aggregator, config),
                aggregator=aggregator,
                log=log,
            )

        except ScreeningError:
            raise
        except Exception as e:
            raise RuntimeError(f"Erro no treino do agregador de lâminas: {e}") from e

    @staticmethod
    def pipeline_checkpoint(tile_checkpoint: Checkpoint, aggregator: Optional[nn.Module], config: RunConfig) -> Checkpoint:
        """Checkpoint autocontido: rede de tiles + agregador"""
        arrays = {f"{TILE_PREFIX}{name}": value for name, value in tile_checkpoint.arrays.items()}
        aggregator_architecture = f"topk-threshold-k{config.k}-tau{config.tau}"
        if aggregator is not None:
            arrays.update(state_arrays(aggregator.state_dict(), AGGREGATOR_PREFIX))
            aggregator_architecture = aggregator.architecture
        stored = dict(tile_checkpoint.metadata.config)
        stored.update(aggregator=config.aggregator, k=config.k, tau=config.tau,
                      agg_depth=config.agg_depth, agg_heads=config.agg_heads)
        return Checkpoint(
            arrays=arrays,
            metadata=CheckpointMetadata(
                kind="wsi_pipeline",
                architecture=f"{tile_checkpoint.architecture}+{aggregator_architecture}",
                seed=config.seed,
                config=stored,
            ),
            extra={"tile_architecture": tile_checkpoint.architecture, "aggregator_architecture": aggregator_architecture},
        )

    @staticmethod
    def load_pipeline(checkpoint: Checkpoint) -> Tuple[TileClassifier, Optional[nn.Module], RunConfig]:
        """
        Reconstrói rede de tiles, agregador e configuração de um checkpoint wsi_pipeline

        Raises:
            CheckpointError: tipo ou arquitetura incompatíveis
        """
        if checkpoint.metadata.kind != "wsi_pipeline":
            raise CheckpointError(f"Checkpoint do tipo {checkpoint.metadata.kind}, esperado wsi_pipeline")
        config = RunConfig.load(None, **checkpoint.metadata.config)
        model = TileController.load_classifier(checkpoint, prefix=TILE_PREFIX)
        aggregator = build_aggregator(config, model.embed_dim)
        if aggregator is not None:
            expected = checkpoint.extra.get("aggregator_architecture")
            if expected != aggregator.architecture:
                raise CheckpointError(f"Arquitetura do agregador {expected} difere de {aggregator.architecture}")
            load_state(aggregator, checkpoint.subset(AGGREGATOR_PREFIX))
            aggregator.eval()
        return model, aggregator, config

    @staticmethod
    def infer_manifest(
        pipeline: Tuple[TileClassifier, Optional[nn.Module], RunConfig],
        repository: DatasetRepository,
        manifest: SlideManifest,
    ) -> Tuple[WSIBundle, Verdict]:
        """Veredito de uma lâmina descrita por manifesto (pipeline vindo de load_pipeline)"""
        model, aggregator, config = pipeline
        bundle = WSIController.score_manifests(model, repository, [manifest], config.batch_tile)[0]
        verdict = WSIController.decide(bundle, aggregator, config)
        return bundle.model_copy(update={"verdict": verdict}), verdict

    @staticmethod
    def infer_image(
        pipeline: Tuple[TileClassifier, Optional[nn.Module], RunConfig], image: np.ndarray, slide_id: str
    ) -> Tuple[WSIBundle, Verdict]:
        """Recorta uma imagem de lâmina inteira, pontua os tiles e agrega"""
        model, aggregator, config = pipeline
        with log_stage("crop", slide_id=slide_id, tile_size=model.tile_size):
            tiles, _ = crop_slide(image, model.tile_size, prefix=slide_id)
        pixels = [to_tensor(t.pixels) for t in tiles]
        results = TileController.predict_pixels(model, pixels, [t.tile_id for t in tiles], config.batch_tile)
        bundle = WSIBundle(slide_id=slide_id, tile_results=results)
        verdict = WSIController.decide(bundle, aggregator, config)
        return bundle.model_copy(update={"verdict": verdict}), verdict
