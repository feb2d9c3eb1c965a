import argparse
from typing import Any, Dict

from candida_screen.controllers.synth_controller import SynthController
from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import ParameterError
from candida_screen.schemas.synth_schema import SynthConfig


def run_synth(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """
    Gera o dataset sintético em --out

    Example:
        python -m candida_screen.main synth --out data/ --tiles 100 --slides 10 --seed 0
    """
    try:
        synth_config = SynthConfig(
            out_dir=args.out,
            n_tiles=args.tiles,
            tile_size=args.tile_size or config.tile_size,
            positive_ratio=args.positive_ratio,
            n_slides=args.slides,
            tiles_per_slide=args.tiles_per_slide,
            slide_positive_ratio=args.slide_positive_ratio,
            positive_tiles_per_slide=args.positive_tiles_per_slide,
            seed=config.seed,
        )
    except ValueError as e:
        raise ParameterError(f"Parâmetros de geração inválidos: {e}") from e
    summary = SynthController.gen_dataset(synth_config)
    return {
        "n_tiles": summary.n_tiles,
        "n_positive": summary.n_positive,
        "n_slides": summary.n_slides,
        "n_positive_slides": summary.n_positive_slides,
    }


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("synth", parents=parents, help="Gera tiles e lâminas sintéticas")
    parser.add_argument("--tiles", type=int, default=100, help="Tiles avulsos")
    parser.add_argument("--slides", type=int, default=0, help="Lâminas sintéticas")
    parser.add_argument("--tiles-per-slide", dest="tiles_per_slide", type=int, default=20)
    parser.add_argument("--positive-ratio", dest="positive_ratio", type=float, default=0.5)
    parser.add_argument("--slide-positive-ratio", dest="slide_positive_ratio", type=float, default=0.5)
    parser.add_argument("--positive-tiles-per-slide", dest="positive_tiles_per_slide", type=int, default=2)
    parser.add_argument("--tile-size", dest="tile_size", type=int, default=None)
    parser.set_defaults(handler=run_synth)
