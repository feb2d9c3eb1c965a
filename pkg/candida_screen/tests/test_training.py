import math

import numpy as np
import pandas as pd
import pytest
import torch

from candida_screen.controllers.cam_controller import CamController
from candida_screen.controllers.detector_controller import DetectorController
from candida_screen.controllers.eval_controller import EvalController, parse_combos
from candida_screen.controllers.tile_controller import TileController, training_step
from candida_screen.controllers.wsi_controller import AGGREGATOR_PREFIX, TILE_PREFIX, WSIController
from candida_screen.core.exceptions import CheckpointError, DatasetError, ParameterError
from candida_screen.repositories.checkpoint_repository import CheckpointRepository
from candida_screen.repositories.dataset_repository import DetectionDataset, TileDataset
from candida_screen.schemas.wsi_schema import WSIBundle
from candida_screen.services.augment import IDENTITY
from candida_screen.services.tiling import load_image


class TestTrainingStep:
    """
    Testes do objetivo de um lote do classificador de tiles.
    """

    @pytest.fixture
    def batch(self, repository):
        dataset = TileDataset(repository, repository.pool_ids()[:4])
        pixels = torch.stack([dataset.pixels(i) for i in range(len(dataset))])
        return pixels, torch.tensor(dataset.labels())

    def test_without_cl_contrastive_terms_are_zero(self, batch, tiny_config):
        config = tiny_config.model_copy(update={"cl": False})
        model = TileController.prepare_model(config)

        bundle = training_step(model, *batch, config)

        assert float(bundle.l_cl) == 0.0
        assert float(bundle.total) == pytest.approx(float(bundle.l_ce))

    def test_with_cl_total_combines_terms(self, batch, tiny_config):
        model = TileController.prepare_model(tiny_config)

        bundle = training_step(model, *batch, tiny_config)

        assert float(bundle.total) == pytest.approx(float(bundle.l_ce) + 0.1 * float(bundle.l_cl), rel=1e-5)
        assert 0.0 <= float(bundle.l_focus) <= 1.0
        bundle.total.backward()
        assert any(p.grad is not None for p in model.parameters())

    def test_full_objective_reaches_every_parameter(self, batch, tiny_config):
        """
        total = l_ce + alpha·(l_tri + l_am + l_focus) dá gradiente finito e não nulo a todo parâmetro treinável.

        Cenário: termos contrastivos aplicados a todas as amostras do lote.
        """
        config = tiny_config.model_copy(update={"cl_positive_only": False})
        model = TileController.prepare_model(config)

        bundle = training_step(model, *batch, config, generator=torch.Generator().manual_seed(0))
        bundle.total.backward()

        for name, parameter in model.named_parameters():
            if parameter.requires_grad:
                assert parameter.grad is not None, name
                assert torch.isfinite(parameter.grad).all(), name
                assert parameter.grad.abs().sum() > 0, name

    def test_identity_augment_and_empty_mask_give_margin(self, batch, tiny_config):
        """
        Sem aumento e com máscara nula, I_aug = I = I_masked e o triplet vale a margem.

        Cenário: mask_sigma muito alto faz sigmoid(scale·(A − sigma)) valer 0 em todo pixel.

        Verifica:
        - l_tri == margin
        - l_focus == 0
        - l_am igual ao score candida da imagem original
        """
        config = tiny_config.model_copy(update={"mask_sigma": 1e6, "cl_positive_only": False, "margin": 1.0})
        model = TileController.prepare_model(config)
        pixels, labels = batch

        bundle = training_step(model, pixels, labels, config, augment=IDENTITY)

        assert float(bundle.l_tri) == pytest.approx(1.0, abs=1e-6)
        assert float(bundle.l_focus) == 0.0
        with torch.no_grad():
            original = torch.softmax(model(pixels).logits, dim=-1)[:, 1].mean()
        assert float(bundle.l_am) == pytest.approx(float(original), abs=1e-6)


class TestTileTraining:
    """
    Testes do treino do classificador de tiles.
    """

    def test_checkpoint_and_logs(self, trained_tile):
        experiment, result = trained_tile
        train_size = len(experiment.folds[0].train)

        assert result.checkpoint.metadata.kind == "tile_classifier"
        assert len(result.train_log) == math.ceil(train_size / 4)
        assert [row["epoch"] for row in result.val_log] == [1]
        assert result.best_epoch == 1

    def test_writes_log_tables(self, repository, tiny_config, tmp_path):
        experiment = EvalController.prepare_tiles(repository, tiny_config)
        fold = experiment.folds[1]

        TileController.train_tile_classifier(
            experiment.dataset(fold.train), tiny_config, val_set=experiment.dataset(fold.val), out_dir=tmp_path
        )

        assert (tmp_path / "train_log.csv").read_text().splitlines()[0] == "step,l_ce,l_tri,l_am,l_focus,total"
        assert (tmp_path / "val_log.csv").read_text().splitlines()[0] == "epoch,val_ce,val_auc"

    def test_same_seed_same_weights(self, repository, tiny_config):
        experiment = EvalController.prepare_tiles(repository, tiny_config)
        train = experiment.dataset(experiment.folds[0].train)

        first = TileController.train_tile_classifier(train, tiny_config)
        second = TileController.train_tile_classifier(train, tiny_config)

        for name, array in first.checkpoint.arrays.items():
            assert np.array_equal(array, second.checkpoint.arrays[name]), name

    def test_reloaded_classifier_predicts_same_scores(self, trained_tile):
        experiment, result = trained_tile
        test = experiment.dataset(experiment.folds[0].test)

        model = TileController.load_classifier(result.checkpoint)
        first, labels = TileController.predict(model, test)
        second, _ = TileController.predict(TileController.load_classifier(result.checkpoint), test)

        assert [r.score for r in first] == [r.score for r in second]
        assert len(labels) == len(test)
        assert all(0.0 <= r.score <= 1.0 for r in first)

    def test_pt_requires_encoder_checkpoint(self, repository, tiny_config):
        experiment = EvalController.prepare_tiles(repository, tiny_config)
        config = tiny_config.model_copy(update={"pt": True})

        with pytest.raises(CheckpointError):
            TileController.train_tile_classifier(experiment.dataset(experiment.folds[0].train), config)

    def test_pt_keeps_frozen_prefix_from_detector(self, repository, tiny_config):
        """
        Com PT, stem + estágio 1 do classificador treinado são idênticos ao encoder do detector.

        Verifica:
        - Parâmetros e estatísticas do prefixo congelado inalterados
        - Estágio 4 treinado normalmente
        """
        config = tiny_config.model_copy(update={"pt": True})
        experiment = EvalController.prepare_tiles(repository, config)
        detector = DetectorController.train_detector(
            DetectionDataset(repository, experiment.detection_ids, experiment.annotations), config
        )

        result = TileController.train_tile_classifier(
            experiment.dataset(experiment.folds[0].train), config, detector_encoder=detector.encoder
        )

        frozen = [n for n in detector.encoder.arrays if n.startswith(("stem.", "stages.0."))]
        assert frozen
        for name in frozen:
            assert np.array_equal(result.checkpoint.arrays[f"encoder.{name}"], detector.encoder.arrays[name]), name
        stage4 = [n for n in detector.encoder.arrays if n.startswith("stages.3.") and n.endswith("weight")]
        assert any(
            not np.array_equal(result.checkpoint.arrays[f"encoder.{n}"], detector.encoder.arrays[n]) for n in stage4
        )

    def test_empty_training_set_raises(self, repository, tiny_config):
        experiment = EvalController.prepare_tiles(repository, tiny_config)

        with pytest.raises(DatasetError):
            TileController.train_tile_classifier(experiment.dataset([]), tiny_config)


class TestWSI:
    """
    Testes do agregador de lâmina, do checkpoint de pipeline e da inferência.
    """

    @pytest.fixture
    def bundles(self, repository, trained_tile, tiny_config):
        _, result = trained_tile
        model = TileController.load_classifier(result.checkpoint)
        return WSIController.score_manifests(model, repository, repository.list_manifests(), tiny_config.batch_tile)

    def test_score_manifests_keeps_labels(self, bundles, repository):
        manifests = repository.list_manifests()

        assert [b.slide_id for b in bundles] == [m.slide_id for m in manifests]
        assert [b.label for b in bundles] == [m.slide_label.index for m in manifests]
        assert all(len(b.tile_results) == 4 for b in bundles)

    def test_train_wsi_checkpoint_layout(self, bundles, trained_tile, tiny_config, tmp_path):
        _, tile_result = trained_tile

        trained = WSIController.train_wsi(bundles[:4], tile_result.checkpoint, tiny_config,
                                          val_bundles=bundles[4:], out_dir=tmp_path)

        arrays = trained.checkpoint.arrays
        assert trained.checkpoint.metadata.kind == "wsi_pipeline"
        assert any(n.startswith(TILE_PREFIX) for n in arrays)
        assert any(n.startswith(AGGREGATOR_PREFIX) for n in arrays)
        assert len(trained.log) == tiny_config.wsi_epochs
        assert (tmp_path / "wsi_log.csv").read_text().splitlines()[0] == "epoch,train_ce,val_auc"

    def test_tile_network_not_updated(self, bundles, trained_tile, tiny_config):
        _, tile_result = trained_tile

        trained = WSIController.train_wsi(bundles, tile_result.checkpoint, tiny_config)

        for name, array in tile_result.checkpoint.arrays.items():
            assert np.array_equal(trained.checkpoint.arrays[f"{TILE_PREFIX}{name}"], array)

    def test_saved_pipeline_reproduces_verdicts(self, bundles, trained_tile, tiny_config, tmp_path):
        _, tile_result = trained_tile
        trained = WSIController.train_wsi(bundles, tile_result.checkpoint, tiny_config)
        path = CheckpointRepository.save(trained.checkpoint, tmp_path / "wsi.ckpt")

        model, aggregator, config = WSIController.load_pipeline(CheckpointRepository.load(path))

        assert config.aggregator == "transformer" and config.k == tiny_config.k
        for bundle in bundles:
            expected = WSIController.decide(bundle, trained.aggregator, tiny_config)
            assert WSIController.decide(bundle, aggregator, config).score == pytest.approx(expected.score, abs=1e-6)

    def test_threshold_pipeline_has_no_aggregator(self, bundles, trained_tile, tiny_config):
        _, tile_result = trained_tile
        config = tiny_config.model_copy(update={"aggregator": "threshold"})

        trained = WSIController.train_wsi(bundles, tile_result.checkpoint, config)
        _, aggregator, loaded = WSIController.load_pipeline(trained.checkpoint)

        assert trained.aggregator is None and aggregator is None
        assert not any(n.startswith(AGGREGATOR_PREFIX) for n in trained.checkpoint.arrays)
        assert loaded.aggregator == "threshold"

    def test_verdict_invariant_to_tile_order(self, bundles, pipeline_ckpt):
        _, aggregator, config = WSIController.load_pipeline(CheckpointRepository.load(pipeline_ckpt))
        for bundle in bundles:
            shuffled = bundle.model_copy(update={"tile_results": list(reversed(bundle.tile_results))})

            assert WSIController.decide(bundle, aggregator, config) == WSIController.decide(shuffled, aggregator, config)

    def test_unlabeled_slide_rejected(self, bundles, trained_tile, tiny_config):
        _, tile_result = trained_tile
        unlabeled = [WSIBundle(slide_id="x", tile_results=bundles[0].tile_results)]

        with pytest.raises(DatasetError):
            WSIController.train_wsi(unlabeled, tile_result.checkpoint, tiny_config)

    def test_wrong_checkpoint_kind_rejected(self, trained_tile):
        _, tile_result = trained_tile

        with pytest.raises(CheckpointError):
            WSIController.load_pipeline(tile_result.checkpoint)

    def test_infer_manifest(self, repository, pipeline_ckpt):
        pipeline = WSIController.load_pipeline(CheckpointRepository.load(pipeline_ckpt))
        manifest = repository.list_manifests()[0]

        bundle, verdict = WSIController.infer_manifest(pipeline, repository, manifest)

        assert bundle.verdict == verdict
        assert len(bundle.tile_results) == len(manifest.tile_ids)
        assert verdict.pred == int(verdict.score >= 0.5)

    def test_infer_image_crops_whole_slide(self, repository, pipeline_ckpt):
        """Imagem de 96×128 com tiles de 64 px vira uma grade 2×2 (com preenchimento)"""
        pipeline = WSIController.load_pipeline(CheckpointRepository.load(pipeline_ckpt))
        tile = load_image(repository.tile_path(repository.pool_ids()[0]))
        image = np.ones((96, 128, 3), dtype=tile.dtype)
        image[:64, :64] = tile

        bundle, verdict = WSIController.infer_image(pipeline, image, "lamina")

        assert [r.tile_id for r in bundle.tile_results] == [
            "lamina_r0_c0", "lamina_r0_c1", "lamina_r1_c0", "lamina_r1_c1"
        ]
        assert 0.0 <= verdict.score <= 1.0


class TestCam:
    """
    Testes da exportação de mapas Grad-CAM.
    """

    def test_exports_requested_tiles(self, repository, trained_tile, tmp_path):
        _, result = trained_tile
        tile_ids = repository.pool_ids()[:2]

        paths = CamController.export(result.checkpoint, repository, tmp_path, tile_ids)

        assert [p.name for p in paths] == [f"{t}.png" for t in tile_ids]
        assert all(p.is_file() for p in paths)
        assert load_image(paths[0]).shape == (64, 64, 3)

    def test_accepts_pipeline_checkpoint(self, repository, pipeline_ckpt, tmp_path):
        paths = CamController.export(CheckpointRepository.load(pipeline_ckpt), repository, tmp_path)

        assert 0 < len(paths) <= 8

    def test_unknown_tile_raises(self, repository, trained_tile, tmp_path):
        _, result = trained_tile

        with pytest.raises(DatasetError):
            CamController.export(result.checkpoint, repository, tmp_path, ["nao_existe"])


class TestEvalController:
    """
    Testes da avaliação de predições, da preparação das dobras e da ablação.
    """

    def test_evaluate_predictions(self, tmp_path):
        pred = tmp_path / "verdicts.csv"
        truth = tmp_path / "labels.csv"
        pd.DataFrame({"slide_id": ["a", "b", "c", "d"], "score": [0.8, 0.4, 0.6, 0.2], "pred": [1, 0, 1, 0]}).to_csv(pred, index=False)
        pd.DataFrame({"slide_id": ["d", "c", "b", "a"], "label": [0, 0, 1, 1]}).to_csv(truth, index=False)

        metrics = EvalController.evaluate_predictions(pred, truth)

        assert metrics.auc == 0.75
        assert metrics.acc == 0.5

    def test_prediction_without_label_raises(self, tmp_path):
        pred = tmp_path / "verdicts.csv"
        truth = tmp_path / "labels.csv"
        pd.DataFrame({"slide_id": ["a", "z"], "score": [0.8, 0.4]}).to_csv(pred, index=False)
        pd.DataFrame({"slide_id": ["a", "b"], "label": [1, 0]}).to_csv(truth, index=False)

        with pytest.raises(DatasetError):
            EvalController.evaluate_predictions(pred, truth)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(DatasetError):
            EvalController.evaluate_predictions(tmp_path / "a.csv", tmp_path / "b.csv")

    def test_parse_combos(self):
        assert len(parse_combos(None)) == 8
        assert parse_combos("111,000") == [(False, False, False), (True, True, True)]
        with pytest.raises(ParameterError):
            parse_combos("12")

    def test_detection_pool_only_in_training(self, repository, tiny_config):
        experiment = EvalController.prepare_tiles(repository, tiny_config)
        annotations = repository.read_annotations()

        assert experiment.detection_ids
        assert all(annotations[t].boxes for t in experiment.detection_ids)
        for fold in experiment.folds:
            assert set(experiment.detection_ids) <= set(fold.train)
            assert not set(experiment.detection_ids) & (set(fold.val) | set(fold.test))

    def test_ablation_single_combo(self, repository, tiny_config, tmp_path):
        """
        Ablação restrita à linha baseline (000) com 3 dobras.

        Verifica:
        - ablation.csv com cabeçalho fixo e uma linha
        - metrics.json com as 3 dobras da chave "000"
        """
        reports = EvalController.ablation_harness(repository, tiny_config, tmp_path, parse_combos("000"))

        table = pd.read_csv(tmp_path / "ablation.csv")
        assert list(table.columns) == ["PT", "SSA", "CL", "AUC", "ACC", "Sen", "Spe", "F1"]
        assert len(table) == 1 and table.loc[0, "PT"] == 0
        assert list(reports) == ["000"]
        assert len(reports["000"].folds) == 3
