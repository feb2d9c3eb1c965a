"""
Execuções ponta a ponta em dados sintéticos (lentas, desativadas por padrão).

Rodar com: pytest -m slow
"""
import statistics

import pytest

from candida_screen.controllers.detector_controller import DetectorController
from candida_screen.controllers.eval_controller import EvalController, parse_combos
from candida_screen.controllers.synth_controller import SynthController
from candida_screen.controllers.tile_controller import TileController
from candida_screen.controllers.wsi_controller import WSIController
from candida_screen.core.config import default_config
from candida_screen.repositories.dataset_repository import DatasetRepository, DetectionDataset, TileDataset
from candida_screen.schemas.synth_schema import SynthConfig
from candida_screen.services.folds import make_folds
from candida_screen.services.metrics import evaluate

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    """500 tiles avulsos e 60 lâminas de 20 tiles, 128 px, semente 0"""
    root = tmp_path_factory.mktemp("benchmark")
    SynthController.gen_dataset(SynthConfig(
        out_dir=root, n_tiles=500, tile_size=128, n_slides=60, tiles_per_slide=20, seed=0,
    ))
    return DatasetRepository(root)


@pytest.fixture(scope="module")
def full_config(tmp_path_factory):
    return default_config(preset="toy", tile_size=128, epochs=30, detect_epochs=10,
                          log_dir=tmp_path_factory.mktemp("logs"))


@pytest.fixture(scope="module")
def tile_model(benchmark, full_config):
    """Classificador completo (PT + SSA + CL): 300 tiles de treino, 100 de validação (seleção), 100 de teste"""
    annotations = benchmark.read_annotations()
    pool = benchmark.pool_ids()
    fold = make_folds(pool, [annotations[t].label.index for t in pool], n_folds=5, seed=0)[0]
    train_ids = fold.train

    detector = DetectorController.train_detector(DetectionDataset(benchmark, train_ids, annotations), full_config)
    result = TileController.train_tile_classifier(
        TileDataset(benchmark, train_ids, annotations), full_config,
        val_set=TileDataset(benchmark, fold.val, annotations), detector_encoder=detector.encoder,
    )
    return TileController.load_classifier(result.checkpoint), result.checkpoint, TileDataset(benchmark, fold.test, annotations)


class TestEndToEnd:
    """
    Critérios de aceitação em escala de desktop.
    """

    def test_tile_auc(self, tile_model, full_config):
        model, _, test = tile_model

        results, labels = TileController.predict(model, test, full_config.batch_tile)

        assert evaluate([r.score for r in results], labels).auc >= 0.90

    def test_wsi_auc(self, benchmark, tile_model, full_config):
        model, checkpoint, _ = tile_model
        manifests = benchmark.list_manifests()
        bundles = WSIController.score_manifests(model, benchmark, manifests, full_config.batch_tile)
        labels = [b.label for b in bundles]
        fold = make_folds([b.slide_id for b in bundles], labels, n_folds=3, seed=0)[0]
        index = {b.slide_id: b for b in bundles}

        trained = WSIController.train_wsi([index[s] for s in fold.train + fold.val], checkpoint, full_config)
        test = [index[s] for s in fold.test]
        scores = [WSIController.decide(b, trained.aggregator, full_config).score for b in test]

        assert len(test) == 20
        assert evaluate(scores, [b.label for b in test]).auc >= 0.85

    def test_ablation_direction(self, benchmark, full_config, tmp_path):
        """Mediana em 3 sementes: AUC da configuração completa >= AUC do baseline"""
        full, baseline = [], []
        for seed in range(3):
            config = full_config.model_copy(update={"seed": seed})
            reports = EvalController.ablation_harness(benchmark, config, tmp_path / str(seed), parse_combos("000,111"))
            baseline.append(reports["000"].mean["auc"])
            full.append(reports["111"].mean["auc"])

        assert statistics.median(full) >= statistics.median(baseline)

    def test_wsi_comparison_table(self, benchmark, full_config, tmp_path):
        config = full_config.model_copy(update={"epochs": 5, "detect_epochs": 2, "wsi_epochs": 20})

        reports = EvalController.wsi_comparison(benchmark, config, tmp_path)

        assert set(reports) == {
            "detection+threshold", "baseline+threshold", "ours+threshold", "ours+mlp", "ours+transformer"
        }
        header = (tmp_path / "wsi_comparison.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "method,aggregator,AUC,ACC,Sen"
