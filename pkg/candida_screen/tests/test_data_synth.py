import filecmp
import json

import numpy as np
import pandas as pd
import pytest

from candida_screen.controllers.synth_controller import SynthController
from candida_screen.core.exceptions import DatasetError, ParameterError
from candida_screen.repositories.dataset_repository import DatasetRepository
from candida_screen.schemas.synth_schema import Label, SlideManifest, StyleParams, SynthConfig
from candida_screen.services.data_synth import (
    FILAMENT_DELTA,
    STROKE_DIRECTION,
    check_manifest,
    filament_width,
    gen_tile,
    plan_dataset,
    render_tile,
    stroke_coverage,
)


class TestGenTile:
    """
    Testes do gerador de tiles sintéticos.

    Cobrem rótulo/caixas, determinismo, isolamento do estilo e validação dos
    parâmetros de entrada.
    """

    def test_negative_tile_has_no_boxes(self):
        """Tile negativo (semente 0, estilo padrão, 128 px) sai sem caixas e com rótulo negativo"""
        tile = gen_tile(0, "negative", size=128)

        assert tile.label is Label.NEGATIVE
        assert tile.boxes == []
        assert tile.pixels.shape == (128, 128, 3)

    def test_same_seed_is_bit_identical(self):
        """
        Duas chamadas com os mesmos (seed, label, style, size) produzem o mesmo array.

        Verifica igualdade exata (np.array_equal), não aproximada.
        """
        first = gen_tile(7, "positive", size=128)
        second = gen_tile(7, "positive", size=128)

        assert np.array_equal(first.pixels, second.pixels)
        assert first.boxes == second.boxes

    def test_style_changes_pixels_but_not_geometry(self):
        """
        Estilos diferentes com a mesma semente mantêm as caixas e alteram a cor.

        Cenário: semente 7 positiva com estilo padrão e com um estilo alterado.

        Verifica:
        - Lista de caixas idêntica
        - Médias por canal diferentes
        """
        s1 = StyleParams()
        s2 = StyleParams(hue_shift=0.08, contrast=1.2, brightness=0.85, background_tint=(0.9, 0.95, 0.88))

        a = gen_tile(7, Label.POSITIVE, s1, 128)
        b = gen_tile(7, Label.POSITIVE, s2, 128)

        assert a.boxes == b.boxes
        assert not np.allclose(a.pixels.mean(axis=(0, 1)), b.pixels.mean(axis=(0, 1)))

    @pytest.mark.parametrize("seed", range(8))
    def test_positive_tile_filaments(self, seed):
        """Tiles positivos têm de 1 a 3 hifas longas, com caixas dentro da imagem"""
        size = 128
        tile = gen_tile(seed, "positive", size=size)

        assert tile.label is Label.POSITIVE
        assert 1 <= len(tile.boxes) <= 3
        for x_min, y_min, x_max, y_max in tile.boxes:
            assert 0 <= x_min < x_max <= size
            assert 0 <= y_min < y_max <= size
            assert np.hypot(x_max - x_min, y_max - y_min) >= 0.3 * size

    def test_pixels_in_unit_range(self, positive_tile, negative_tile):
        for tile in (positive_tile, negative_tile):
            assert tile.pixels.min() >= 0.0
            assert tile.pixels.max() <= 1.0

    def test_size_below_minimum_raises(self):
        with pytest.raises(ParameterError):
            gen_tile(0, "positive", size=32)

    def test_negative_seed_raises(self):
        with pytest.raises(ParameterError):
            gen_tile(-1, "negative")

    def test_style_out_of_range_raises(self):
        """Estilo passado como dict com hue_shift fora de [-0.1, 0.1] gera ParameterError"""
        with pytest.raises(ParameterError):
            gen_tile(0, "negative", style={"hue_shift": 0.5})


class TestFilamentStroke:
    """
    Testes da largura e do contraste das hifas.

    A largura é medida como área da cobertura dividida pelo comprimento do
    traçado (integral da seção transversal), e o contraste pelo escurecimento
    máximo amplificado pelo estilo mais forte permitido.
    """

    def test_straight_stroke_cross_section_equals_width(self):
        """Linha horizontal em y=20.3: cada coluna interna soma exatamente a largura"""
        points = np.stack([np.arange(10.0, 50.01, 0.25), np.full(161, 20.3)], axis=1)

        coverage = stroke_coverage(points, 64, 1.92)

        np.testing.assert_allclose(coverage[:, 15:46].sum(axis=0), 1.92, atol=1e-9)
        assert (coverage[:, 30] >= 0.5).sum() == 2

    @pytest.mark.parametrize("size", [64, 128, 256])
    def test_width_within_bound(self, size):
        assert filament_width(size) <= 0.02 * size

    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("size", [64, 128])
    def test_rendered_filaments_width_and_contrast(self, seed, size):
        """
        Para 6 sementes, cada hifa desenhada respeita largura <= 0.02·size e contraste <= 0.25.

        Verifica:
        - Área da cobertura / comprimento do traçado <= 0.02·size
        - Escurecimento máximo × canal mais forte × contraste 1.3 × brilho 1.2 <= 0.25
        """
        rendered = render_tile(seed, True, size)

        assert 1 <= len(rendered.paths) <= 3
        for path in rendered.paths:
            length = float(np.hypot(*np.diff(path, axis=0).T).sum())
            area = float(stroke_coverage(path, size, rendered.width).sum())
            assert area / length <= 0.02 * size

        assert 0.0 < rendered.darkness.max() <= FILAMENT_DELTA[1]
        assert rendered.darkness.max() * STROKE_DIRECTION.max() * 1.3 * 1.2 <= 0.25

    def test_negative_tile_has_no_filament_layer(self):
        rendered = render_tile(3, False, 128)

        assert rendered.paths == []
        assert not rendered.darkness.any()


class TestPlanDataset:
    """
    Testes do planejamento do dataset (contagens exatas e invariantes das lâminas).
    """

    def test_exact_tile_counts(self, tmp_path):
        """100 tiles com razão 0.5 resultam em exatamente 50 positivos e 50 negativos"""
        plan = plan_dataset(SynthConfig(out_dir=tmp_path, n_tiles=100, positive_ratio=0.5))

        labels = [t.label for t in plan.tiles]
        assert labels.count(Label.POSITIVE) == 50
        assert labels.count(Label.NEGATIVE) == 50

    def test_exact_slide_counts(self, tmp_path):
        """10 lâminas × 20 tiles com razão 0.5 resultam em 5 manifestos positivos"""
        plan = plan_dataset(SynthConfig(out_dir=tmp_path, n_tiles=0, n_slides=10, tiles_per_slide=20))

        assert len(plan.manifests) == 10
        assert sum(m.slide_label is Label.POSITIVE for m in plan.manifests) == 5
        assert all(len(m.tile_ids) == 20 for m in plan.manifests)

    def test_manifests_satisfy_label_invariant(self, tmp_path):
        plan = plan_dataset(SynthConfig(out_dir=tmp_path, n_tiles=0, n_slides=8, tiles_per_slide=5))
        labels = {t.tile_id: t.label for t in plan.tiles}

        assert all(check_manifest(m, labels) for m in plan.manifests)

    def test_slide_shares_one_style(self, tmp_path):
        plan = plan_dataset(SynthConfig(out_dir=tmp_path, n_tiles=0, n_slides=3, tiles_per_slide=4))
        by_id = {t.tile_id: t for t in plan.tiles}

        for manifest in plan.manifests:
            assert {by_id[t].style for t in manifest.tile_ids} == {manifest.style}

    def test_fixed_style_keeps_geometry(self, tmp_path):
        """Trocar apenas o estilo do dataset não altera sementes nem rótulos dos tiles"""
        base = plan_dataset(SynthConfig(out_dir=tmp_path, n_tiles=10, n_slides=2, tiles_per_slide=3))
        styled = plan_dataset(SynthConfig(
            out_dir=tmp_path, n_tiles=10, n_slides=2, tiles_per_slide=3, style=StyleParams(brightness=1.1)
        ))

        assert [(t.tile_id, t.seed, t.label) for t in base.tiles] == [(t.tile_id, t.seed, t.label) for t in styled.tiles]

    def test_zero_counts_raise(self, tmp_path):
        with pytest.raises(DatasetError):
            plan_dataset(SynthConfig(out_dir=tmp_path, n_tiles=0, n_slides=0))


class TestGenDataset:
    """
    Testes da gravação do dataset em disco pelo SynthController.
    """

    def test_layout_on_disk(self, synth_root):
        """
        O dataset da sessão segue o layout tiles/ + annotations.csv + slides/.

        Verifica:
        - Cabeçalho exato da tabela de anotações
        - Um PNG por tile anotado
        - Manifestos com as chaves slide_id, slide_label, tile_ids, style
        """
        frame = pd.read_csv(synth_root / "annotations.csv")
        assert list(frame.columns) == ["tile_id", "label", "x_min", "y_min", "x_max", "y_max"]

        tile_ids = set(frame["tile_id"])
        assert len(tile_ids) == 16 + 6 * 4
        assert {p.stem for p in (synth_root / "tiles").glob("*.png")} == tile_ids

        manifests = sorted((synth_root / "slides").glob("*.json"))
        assert len(manifests) == 6
        payload = json.loads(manifests[0].read_text(encoding="utf-8"))
        assert set(payload) == {"slide_id", "slide_label", "tile_ids", "style"}
        SlideManifest(**payload)

    def test_negative_rows_have_empty_boxes(self, synth_root):
        frame = pd.read_csv(synth_root / "annotations.csv")
        negatives = frame[frame["label"] == "negative"]

        assert negatives[["x_min", "y_min", "x_max", "y_max"]].isna().all().all()
        assert not negatives["tile_id"].duplicated().any()

    def test_annotations_round_trip(self, repository):
        """As anotações lidas reproduzem a consistência rótulo/caixas do gerador"""
        annotations = repository.read_annotations()

        for annotation in annotations.values():
            assert (annotation.label is Label.POSITIVE) == bool(annotation.boxes)

    def test_pool_excludes_slide_tiles(self, repository):
        pool = repository.pool_ids()

        assert len(pool) == 16
        assert all(t.startswith("t") for t in pool)

    def test_two_runs_are_byte_identical(self, tmp_path):
        """
        Mesma configuração e semente gravadas duas vezes produzem arquivos idênticos.

        Compara a tabela de anotações, todos os PNGs e todos os manifestos byte a byte.
        """
        config = dict(n_tiles=6, tile_size=64, n_slides=2, tiles_per_slide=3, positive_tiles_per_slide=1, seed=3)
        SynthController.gen_dataset(SynthConfig(out_dir=tmp_path / "a", **config))
        SynthController.gen_dataset(SynthConfig(out_dir=tmp_path / "b", **config))

        a, b = DatasetRepository(tmp_path / "a"), DatasetRepository(tmp_path / "b")
        assert filecmp.cmp(a.path("annotations.csv"), b.path("annotations.csv"), shallow=False)
        for path in sorted(a.path("tiles").glob("*.png")):
            assert filecmp.cmp(path, b.path("tiles", path.name), shallow=False)
        for path in sorted(a.path("slides").glob("*.json")):
            assert filecmp.cmp(path, b.path("slides", path.name), shallow=False)
