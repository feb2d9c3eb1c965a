"""
Subcomandos de inferência: infer (veredito por lâmina) e cam (mapas Grad-CAM).
"""
import argparse
from pathlib import Path
from typing import Any, Dict, List

from candida_screen.cli.common import require
from candida_screen.controllers.cam_controller import CamController
from candida_screen.controllers.wsi_controller import WSIController
from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import UsageError
from candida_screen.core.log import get_logger
from candida_screen.repositories.checkpoint_repository import CheckpointRepository
from candida_screen.repositories.dataset_repository import DatasetRepository
from candida_screen.repositories.results_repository import ResultsRepository
from candida_screen.services.tiling import load_image

logger = get_logger("cli")


def _dataset_for(manifest_path: Path, data: Path = None) -> DatasetRepository:
    """Dataset do manifesto: --data ou o diretório acima de slides/"""
    if data is not None:
        return DatasetRepository(data)
    return DatasetRepository(Path(manifest_path).resolve().parent.parent)


def run_infer(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """
    Veredito de lâminas com um checkpoint wsi_pipeline.

    Example:
        python -m candida_screen.main infer --ckpt runs/wsi/wsi.ckpt --slide data/slides/s000.json --out runs/infer
        python -m candida_screen.main infer --ckpt runs/wsi/wsi.ckpt --image lamina.png --out runs/infer
    """
    require(args, "ckpt")
    if not args.slide and not args.image:
        raise UsageError("infer: informe --slide ou --image")

    pipeline = WSIController.load_pipeline(CheckpointRepository.load_kind(args.ckpt, "wsi_pipeline"))
    rows: List[Dict[str, Any]] = []
    for slide_path in args.slide or []:
        repository = _dataset_for(slide_path, args.data)
        manifest = repository.read_manifest(Path(slide_path))
        _, verdict = WSIController.infer_manifest(pipeline, repository, manifest)
        rows.append({"slide_id": manifest.slide_id, "score": verdict.score, "pred": verdict.pred,
                     "label": manifest.slide_label.index})
    for image_path in args.image or []:
        slide_id = Path(image_path).stem
        _, verdict = WSIController.infer_image(pipeline, load_image(image_path), slide_id)
        rows.append({"slide_id": slide_id, "score": verdict.score, "pred": verdict.pred, "label": None})

    for row in rows:
        logger.info(f"Lâmina {row['slide_id']}: score={row['score']:.4f} pred={row['pred']}")
    path = ResultsRepository(args.out).write_verdicts(rows)
    return {"verdicts": str(path), "slides": len(rows)}


def run_cam(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """Grava <out>/cam/<tile_id>.png para os tiles escolhidos (--tiles t00001,t00002)"""
    require(args, "ckpt", "data")
    checkpoint = CheckpointRepository.load(args.ckpt)
    tile_ids = [t.strip() for t in args.tiles.split(",") if t.strip()] if args.tiles else None
    paths = CamController.export(checkpoint, DatasetRepository(args.data), args.out, tile_ids, args.target)
    return {"overlays": [str(p) for p in paths]}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("infer", parents=parents, help="Veredito candida por lâmina")
    parser.add_argument("--slide", action="append", type=Path, default=None, help="Manifesto JSON de lâmina (repetível)")
    parser.add_argument("--image", action="append", type=Path, default=None, help="Imagem de lâmina inteira (repetível)")
    parser.set_defaults(handler=run_infer)

    parser = subparsers.add_parser("cam", parents=parents, help="Exporta mapas Grad-CAM de tiles")
    parser.add_argument("--tiles", default=None, help="Ids de tiles separados por vírgula")
    parser.add_argument("--target", type=int, choices=(0, 1), default=1, help="Classe alvo do gradiente")
    parser.set_defaults(handler=run_cam)
