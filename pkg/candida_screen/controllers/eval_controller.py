from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from candida_screen.controllers.detector_controller import DetectorController, DetectorResult
from candida_screen.controllers.tile_controller import TileController
from candida_screen.controllers.wsi_controller import WSIController
from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import DatasetError, ParameterError, ScreeningError
from candida_screen.core.log import get_logger, log_stage
from candida_screen.models.classifier import TileClassifier
from candida_screen.repositories.checkpoint_repository import Checkpoint
from candida_screen.repositories.dataset_repository import DatasetRepository, DetectionDataset, TileDataset
from candida_screen.repositories.results_repository import ResultsRepository
from candida_screen.schemas.metrics_schema import FoldSplit, Metrics, MetricsReport
from candida_screen.schemas.tile_schema import TileResult
from candida_screen.schemas.wsi_schema import WSIBundle
from candida_screen.services.folds import make_folds, split_detection_pool, with_training_extra
from candida_screen.services.metrics import evaluate

logger = get_logger("eval")

# Ordem das linhas da ablação: (PT, SSA, CL)
ABLATION_GRID: Tuple[Tuple[bool, bool, bool], ...] = tuple(product((False, True), repeat=3))
ABLATION_COLUMNS = ["PT", "SSA", "CL", "AUC", "ACC", "Sen", "Spe", "F1"]
WSI_COMPARISON_COLUMNS = ["method", "aggregator", "AUC", "ACC", "Sen"]
WSI_METHODS = (
    ("detection", "threshold"),
    ("baseline", "threshold"),
    ("ours", "threshold"),
    ("ours", "mlp"),
    ("ours", "transformer"),
)


def score_result(score: float, tile_id: str) -> TileResult:
    """TileResult cujo score candida é `score` (logits (0, logit(score)))"""
    p = float(np.clip(score, 1e-12, 1 - 1e-12))
    return TileResult.from_logits((0.0, float(np.log(p / (1 - p)))), np.zeros(1, dtype=np.float32), tile_id)


def combo_key(pt: bool, ssa: bool, cl: bool) -> str:
    return f"{int(pt)}{int(ssa)}{int(cl)}"


def parse_combos(text: Optional[str]) -> List[Tuple[bool, bool, bool]]:
    """'000,111' -> [(False, False, False), (True, True, True)] na ordem da grade"""
    if not text:
        return list(ABLATION_GRID)
    wanted = {item.strip() for item in text.split(",") if item.strip()}
    invalid = [w for w in wanted if len(w) != 3 or set(w) - {"0", "1"}]
    if invalid:
        raise ParameterError(f"Combinações inválidas: {', '.join(sorted(invalid))}")
    return [combo for combo in ABLATION_GRID if combo_key(*combo) in wanted]


@dataclass
class TileExperiment:
    """Pool de tiles avulsos dividido em detecção + validação cruzada"""
    repository: DatasetRepository
    annotations: dict
    detection_ids: List[str]
    folds: List[FoldSplit]
    detector: Optional[DetectorResult] = None

    def dataset(self, ids: Sequence[str]) -> TileDataset:
        return TileDataset(self.repository, ids, self.annotations)


class EvalController:
    """
    Controller de avaliação: métricas de predições, validação cruzada, ablação e comparação por lâmina
    """

    @staticmethod
    def evaluate_predictions(pred_path: Path, truth_path: Path) -> Metrics:
        """
        Cruza verdicts.csv (slide_id,score,...) com labels.csv (slide_id,label) e calcula as métricas

        Raises:
            DatasetError: arquivos ausentes, colunas faltando ou ids sem correspondência
        """
        for path in (pred_path, truth_path):
            if not Path(path).is_file():
                raise DatasetError(f"Arquivo {path} não encontrado")
        pred = pd.read_csv(pred_path, dtype={"slide_id": str})
        truth = pd.read_csv(truth_path, dtype={"slide_id": str})
        for frame, columns, path in ((pred, {"slide_id", "score"}, pred_path), (truth, {"slide_id", "label"}, truth_path)):
            missing = columns - set(frame.columns)
            if missing:
                raise DatasetError(f"Colunas ausentes em {path}: {', '.join(sorted(missing))}")
        merged = pred[["slide_id", "score"]].merge(truth[["slide_id", "label"]], on="slide_id", how="inner")
        if len(merged) != len(pred):
            raise DatasetError("Há predições sem rótulo correspondente em labels.csv")
        return evaluate(merged["score"].to_numpy(), merged["label"].to_numpy())

    @staticmethod
    def prepare_tiles(repository: DatasetRepository, config: RunConfig) -> TileExperiment:
        """Separa o pool de detecção e monta as dobras estratificadas do restante"""
        annotations = repository.read_annotations()
        pool = repository.pool_ids()
        if not pool:
            raise DatasetError(f"Nenhum tile avulso em {repository.root}")
        labels = [annotations[t].label.index for t in pool]
        detection_ids, remaining = split_detection_pool(pool, labels, config.detect_fraction, config.seed)
        remaining_labels = [annotations[t].label.index for t in remaining]
        folds = make_folds(remaining, remaining_labels, config.n_folds, config.seed)
        # o pool de detecção só entra no treino
        folds = with_training_extra(folds, detection_ids)
        return TileExperiment(repository=repository, annotations=annotations, detection_ids=detection_ids, folds=folds)

    @staticmethod
    def ensure_detector(experiment: TileExperiment, config: RunConfig, out_dir: Optional[Path] = None) -> DetectorResult:
        if experiment.detector is None:
            dataset = DetectionDataset(experiment.repository, experiment.detection_ids, experiment.annotations)
            experiment.detector = DetectorController.train_detector(dataset, config, out_dir)
        return experiment.detector

    @staticmethod
    def run_tile_fold(
        experiment: TileExperiment, fold: FoldSplit, config: RunConfig, out_dir: Optional[Path] = None
    ) -> Tuple[Metrics, TileClassifier, Checkpoint]:
        """Treina em train (seleção em val) e avalia em test"""
        detector = EvalController.ensure_detector(experiment, config) if config.pt else None
        result = TileController.train_tile_classifier(
            experiment.dataset(fold.train),
            config,
            val_set=experiment.dataset(fold.val),
            detector_encoder=detector.encoder if detector else None,
            out_dir=out_dir,
        )
        model = TileController.load_classifier(result.checkpoint)
        test_results, labels = TileController.predict(model, experiment.dataset(fold.test), config.batch_tile)
        return evaluate([r.score for r in test_results], labels), model, result.checkpoint

    @staticmethod
    def cross_validate_tiles(
        experiment: TileExperiment, config: RunConfig, out_dir: Optional[Path] = None
    ) -> MetricsReport:
        folds = []
        for fold in experiment.folds:
            fold_dir = Path(out_dir) / f"fold{fold.fold_id}" if out_dir is not None else None
            with log_stage("fold", fold=fold.fold_id, combo=combo_key(config.pt, config.ssa, config.cl)):
                metrics, _, _ = EvalController.run_tile_fold(experiment, fold, config, fold_dir)
            logger.info(f"Dobra {fold.fold_id}: AUC={metrics.auc:.4f} ACC={metrics.acc:.4f}")
            folds.append(metrics)
        return MetricsReport.from_folds(folds)

    @staticmethod
    def ablation_harness(
        repository: DatasetRepository,
        config: RunConfig,
        out_dir: Path,
        combos: Optional[Sequence[Tuple[bool, bool, bool]]] = None,
    ) -> Dict[str, MetricsReport]:
        """
        Executa a grade de ablação (PT, SSA, CL) com validação cruzada.

        Grava ablation.csv (colunas PT, SSA, CL, AUC, ACC, Sen, Spe, F1 em
        'média±desvio' percentual) e metrics.json com os valores por dobra.
        """
        combos = list(ABLATION_GRID) if combos is None else list(combos)
        try:
            experiment = EvalController.prepare_tiles(repository, config)
            if any(pt for pt, _, _ in combos):
                EvalController.ensure_detector(experiment, config, out_dir)

            reports: Dict[str, MetricsReport] = {}
            rows = []
            with log_stage("ablate", combos=len(combos), folds=len(experiment.folds)):
                for pt, ssa, cl in combos:
                    key = combo_key(pt, ssa, cl)
                    combo_config = config.model_copy(update={"pt": pt, "ssa": ssa, "cl": cl})
                    report = EvalController.cross_validate_tiles(experiment, combo_config, Path(out_dir) / key)
                    reports[key] = report
                    rows.append({
                        "PT": int(pt), "SSA": int(ssa), "CL": int(cl),
                        "AUC": report.formatted("auc"), "ACC": report.formatted("acc"),
                        "Sen": report.formatted("sen"), "Spe": report.formatted("spe"), "F1": report.formatted("f1"),
                    })

            results = ResultsRepository(out_dir)
            results.write_table("ablation.csv", rows, ABLATION_COLUMNS)
            results.write_metrics({key: report.model_dump() for key, report in reports.items()})
            return reports

        except ScreeningError:
            raise
        except Exception as e:
            raise RuntimeError(f"Erro na ablação: {e}") from e

    @staticmethod
    def _detection_bundles(experiment: TileExperiment, config: RunConfig, manifests) -> List[WSIBundle]:
        detector_result = EvalController.ensure_detector(experiment, config)
        detector = DetectorController.load_detector(detector_result.encoder, detector_result.head, config.preset)
        bundles = []
        for manifest in manifests:
            dataset = experiment.dataset(manifest.tile_ids)
            scores = DetectorController.detection_scores(detector, [dataset.pixels(i) for i in range(len(dataset))])
            results = [score_result(s, t) for s, t in zip(scores, manifest.tile_ids)]
            bundles.append(WSIBundle(slide_id=manifest.slide_id, tile_results=results, label=manifest.slide_label.index))
        return bundles

    @staticmethod
    def wsi_comparison(repository: DatasetRepository, config: RunConfig, out_dir: Path) -> Dict[str, MetricsReport]:
        """
        Compara decisões por lâmina: detecção + limiar, baseline + limiar e o
        classificador completo com limiar, MLP e transformer.

        Os classificadores de tiles são treinados uma vez no pool avulso (dobra
        0); os agregadores são avaliados em validação cruzada sobre as lâminas.
        """
        try:
            manifests = repository.list_manifests()
            if not manifests:
                raise DatasetError(f"Nenhuma lâmina em {repository.root}")
            experiment = EvalController.prepare_tiles(repository, config)
            fold0 = experiment.folds[0]

            with log_stage("wsi-comparison", slides=len(manifests)):
                tile_models = {}
                for name, flags in (("baseline", (False, False, False)), ("ours", (config.pt, config.ssa, config.cl))):
                    tile_config = config.model_copy(update=dict(zip(("pt", "ssa", "cl"), flags)))
                    _, model, checkpoint = EvalController.run_tile_fold(
                        experiment, fold0, tile_config, Path(out_dir) / f"tile_{name}"
                    )
                    tile_models[name] = (model, checkpoint)

                bundles = {
                    name: WSIController.score_manifests(model, repository, manifests, config.batch_tile)
                    for name, (model, _) in tile_models.items()
                }
                bundles["detection"] = EvalController._detection_bundles(experiment, config, manifests)

                slide_labels = [m.slide_label.index for m in manifests]
                slide_folds = make_folds([m.slide_id for m in manifests], slide_labels, config.n_folds, config.seed)
                index = {m.slide_id: i for i, m in enumerate(manifests)}

                reports: Dict[str, MetricsReport] = {}
                rows = []
                for method, aggregator_name in WSI_METHODS:
                    agg_config = config.model_copy(update={"aggregator": aggregator_name})
                    fold_metrics = []
                    method_bundles = bundles[method]

                    def pick(ids: Sequence[str]) -> List[WSIBundle]:
                        return [method_bundles[index[s]] for s in ids]

                    for fold in slide_folds:
                        aggregator = None
                        if aggregator_name != "threshold":
                            checkpoint = tile_models[method][1]
                            trained = WSIController.train_wsi(
                                pick(fold.train), checkpoint, agg_config, val_bundles=pick(fold.val)
                            )
                            aggregator = trained.aggregator
                        test = pick(fold.test)
                        scores = [WSIController.decide(b, aggregator, agg_config).score for b in test]
                        fold_metrics.append(evaluate(scores, [b.label for b in test]))
                    report = MetricsReport.from_folds(fold_metrics)
                    reports[f"{method}+{aggregator_name}"] = report
                    rows.append({
                        "method": method, "aggregator": aggregator_name,
                        "AUC": report.formatted("auc"), "ACC": report.formatted("acc"), "Sen": report.formatted("sen"),
                    })

            results = ResultsRepository(out_dir)
            results.write_table("wsi_comparison.csv", rows, WSI_COMPARISON_COLUMNS)
            results.write_metrics({key: report.model_dump() for key, report in reports.items()})
            return reports

        except ScreeningError:
            raise
        except Exception as e:
            raise RuntimeError(f"Erro na comparação por lâmina: {e}") from e
