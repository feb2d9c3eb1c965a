"""
Subcomandos de avaliação: eval (métricas de predições) e ablate (grade PT/SSA/CL ou comparação por lâmina).
"""
import argparse
from typing import Any, Dict

from candida_screen.cli.common import require
from candida_screen.controllers.eval_controller import EvalController, parse_combos
from candida_screen.core.config import RunConfig
from candida_screen.repositories.dataset_repository import DatasetRepository
from candida_screen.repositories.results_repository import ResultsRepository


def run_eval(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """
    Métricas de verdicts.csv contra labels.csv (slide_id,label)

    Example:
        python -m candida_screen.main eval --pred runs/infer/verdicts.csv --truth labels.csv --out runs/eval
    """
    require(args, "pred", "truth")
    metrics = EvalController.evaluate_predictions(args.pred, args.truth)
    ResultsRepository(args.out).write_metrics(metrics.model_dump())
    return {"auc": metrics.auc, "acc": metrics.acc}


def run_ablate(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    """Grade de ablação em tiles (ablation.csv) ou comparação por lâmina (wsi_comparison.csv)"""
    require(args, "data")
    repository = DatasetRepository(args.data)
    if args.level == "wsi":
        reports = EvalController.wsi_comparison(repository, config, args.out)
    else:
        reports = EvalController.ablation_harness(repository, config, args.out, parse_combos(args.combos))
    return {key: report.mean["auc"] for key, report in reports.items()}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("eval", parents=parents, help="Avalia vereditos contra rótulos")
    parser.add_argument("--pred", default=None, help="verdicts.csv")
    parser.add_argument("--truth", default=None, help="CSV slide_id,label")
    parser.set_defaults(handler=run_eval)

    parser = subparsers.add_parser("ablate", parents=parents, help="Ablação PT/SSA/CL ou comparação por lâmina")
    parser.add_argument("--level", choices=("tile", "wsi"), default="tile")
    parser.add_argument("--combos", default=None, help="Subconjunto da grade, ex.: 000,111")
    parser.set_defaults(handler=run_ablate)
