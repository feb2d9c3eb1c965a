"""
Subcomandos de treino: pretrain-detect, train-tile e train-wsi.
"""
import argparse
from pathlib import Path
from typing import Any, Dict

from candida_screen.cli.common import require
from candida_screen.controllers.detector_controller import DetectorController
from candida_screen.controllers.eval_controller import EvalController
from candida_screen.controllers.tile_controller import TileController
from candida_screen.controllers.wsi_controller import WSIController
from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import DatasetError, ParameterError
from candida_screen.repositories.checkpoint_repository import CheckpointRepository
from candida_screen.repositories.dataset_repository import DatasetRepository, DetectionDataset
from candida_screen.repositories.results_repository import ResultsRepository
from candida_screen.services.folds import make_folds
from candida_screen.services.metrics import evaluate

ENCODER_CKPT = "encoder.ckpt"
DETECTOR_CKPT = "detector_head.ckpt"
TILE_CKPT = "tile.ckpt"
WSI_CKPT = "wsi.ckpt"


def _fold(folds, index: int):
    if not 0 <= index < len(folds):
        raise ParameterError(f"--fold deve estar entre 0 e {len(folds) - 1}")
    return folds[index]


def run_pretrain_detect(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """Treina o detector no pool de detecção e grava encoder.ckpt + detector_head.ckpt"""
    require(args, "data")
    repository = DatasetRepository(args.data)
    experiment = EvalController.prepare_tiles(repository, config)
    dataset = DetectionDataset(repository, experiment.detection_ids, experiment.annotations)
    result = DetectorController.train_detector(dataset, config, args.out)
    encoder_path = CheckpointRepository.save(result.encoder, Path(args.out) / ENCODER_CKPT)
    head_path = CheckpointRepository.save(result.head, Path(args.out) / DETECTOR_CKPT)
    return {"encoder": str(encoder_path), "detector": str(head_path), "tiles": len(dataset)}


def run_train_tile(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """
    Treina o classificador de tiles numa dobra do pool avulso e avalia no teste da dobra.

    Com PT ativo, --ckpt aponta para o encoder.ckpt do pretrain-detect.
    """
    require(args, "data")
    repository = DatasetRepository(args.data)
    experiment = EvalController.prepare_tiles(repository, config)
    fold = _fold(experiment.folds, args.fold)
    encoder = CheckpointRepository.load_kind(args.ckpt, "encoder") if config.pt and args.ckpt else None

    result = TileController.train_tile_classifier(
        experiment.dataset(fold.train),
        config,
        val_set=experiment.dataset(fold.val),
        detector_encoder=encoder,
        out_dir=args.out,
    )
    model = TileController.load_classifier(result.checkpoint)
    test_results, labels = TileController.predict(model, experiment.dataset(fold.test), config.batch_tile)
    metrics = evaluate([r.score for r in test_results], labels)

    ckpt_path = CheckpointRepository.save(result.checkpoint, Path(args.out) / TILE_CKPT)
    ResultsRepository(args.out).write_metrics({"fold": fold.fold_id, "best_epoch": result.best_epoch, "test": metrics.model_dump()})
    return {"checkpoint": str(ckpt_path), "fold": fold.fold_id, "test_auc": metrics.auc}


def run_train_wsi(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """
    Treina o agregador de lâmina sobre o tile.ckpt (--ckpt) e grava wsi.ckpt.

    As lâminas são divididas em dobras estratificadas; o teste da dobra
    escolhida gera verdicts.csv e metrics.json.
    """
    require(args, "data", "ckpt")
    repository = DatasetRepository(args.data)
    manifests = repository.list_manifests()
    if not manifests:
        raise DatasetError(f"Nenhuma lâmina em {repository.root}")

    tile_ckpt = CheckpointRepository.load_kind(args.ckpt, "tile_classifier")
    model = TileController.load_classifier(tile_ckpt)
    bundles = WSIController.score_manifests(model, repository, manifests, config.batch_tile)
    index = {b.slide_id: b for b in bundles}
    folds = make_folds([m.slide_id for m in manifests], [m.slide_label.index for m in manifests], config.n_folds, config.seed)
    fold = _fold(folds, args.fold)

    trained = WSIController.train_wsi(
        [index[s] for s in fold.train], tile_ckpt, config,
        val_bundles=[index[s] for s in fold.val], out_dir=args.out,
    )
    test = [index[s] for s in fold.test]
    verdicts = [WSIController.decide(b, trained.aggregator, config) for b in test]
    rows = [
        {"slide_id": b.slide_id, "score": v.score, "pred": v.pred, "label": b.label}
        for b, v in zip(test, verdicts)
    ]
    metrics = evaluate([v.score for v in verdicts], [b.label for b in test])

    results = ResultsRepository(args.out)
    results.write_verdicts(rows)
    results.write_metrics({"fold": fold.fold_id, "test": metrics.model_dump()})
    ckpt_path = CheckpointRepository.save(trained.checkpoint, Path(args.out) / WSI_CKPT)
    return {"checkpoint": str(ckpt_path), "fold": fold.fold_id, "test_auc": metrics.auc}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("pretrain-detect", parents=parents, help="Pré-treino do encoder por detecção de hifas")
    parser.set_defaults(handler=run_pretrain_detect)

    parser = subparsers.add_parser("train-tile", parents=parents, help="Treino do classificador de tiles")
    parser.set_defaults(handler=run_train_tile)

    parser = subparsers.add_parser("train-wsi", parents=parents, help="Treino do agregador de lâmina")
    parser.set_defaults(handler=run_train_wsi)
