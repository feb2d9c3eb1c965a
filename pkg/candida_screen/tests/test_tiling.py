import numpy as np
import pytest

from candida_screen.core.exceptions import DatasetError, ParameterError, ShapeError
from candida_screen.schemas.synth_schema import Label
from candida_screen.services.tiling import (
    blend_overlay,
    crop_slide,
    load_image,
    make_grid,
    reassemble,
    save_image,
    save_overlay,
    tile_count,
)


class TestCropSlide:
    """
    Testes do recorte de lâminas em tiles (contagem, preenchimento branco e reconstrução).
    """

    @pytest.mark.parametrize("extent,tile,expected", [(2048, 1024, 4), (1024, 1024, 1), (2500, 1024, 9)])
    def test_grid_counts_at_full_scale(self, extent, tile, expected):
        """Contagens da grade para lâminas de 2048², 1024² e 2500² com tiles de 1024"""
        assert len(make_grid(extent, extent, tile)) == expected

    def test_exact_tiling(self):
        image = np.random.default_rng(0).uniform(size=(256, 256, 3))
        tiles, grid = crop_slide(image, 128)

        assert len(tiles) == 4
        assert [t.tile_id for t in tiles] == ["tile_r0_c0", "tile_r0_c1", "tile_r1_c0", "tile_r1_c1"]
        assert np.array_equal(tiles[1].pixels, image[:128, 128:])

    def test_identity_case(self):
        image = np.random.default_rng(1).uniform(size=(128, 128, 3))
        tiles, _ = crop_slide(image, 128, 128)

        assert len(tiles) == 1
        assert np.array_equal(tiles[0].pixels, image)

    def test_edge_tiles_are_white_padded(self):
        """
        Imagem de 300×300 com tile 128: ceil(172/128 + 1)² = 9 tiles.

        Verifica que a região de preenchimento do último tile tem média 1.0.
        """
        image = np.zeros((300, 300, 3))
        tiles, grid = crop_slide(image, 128)

        assert len(tiles) == 9
        assert (grid.n_rows, grid.n_cols) == (3, 3)
        last = tiles[-1].pixels
        valid = 300 - 256
        assert last[valid:, :].mean() == 1.0
        assert last[:, valid:].mean() == 1.0
        assert last[:valid, :valid].mean() == 0.0

    def test_reassembly_is_bit_exact(self):
        image = np.random.default_rng(2).uniform(size=(192, 256, 3))
        tiles, grid = crop_slide(image, 64)

        assert np.array_equal(reassemble(tiles, grid, 192, 256), image)

    def test_randomized_count_formula(self):
        """Para 200 combinações aleatórias o número de tiles segue a fórmula fechada"""
        rng = np.random.default_rng(3)
        for _ in range(200):
            h, w = (int(v) for v in rng.integers(1, 400, size=2))
            tile = int(rng.integers(1, 128))
            stride = int(rng.integers(1, 128))
            grid = make_grid(h, w, tile, stride)

            expected_rows = 1 if h <= tile else int(np.ceil((h - tile) / stride + 1))
            expected_cols = 1 if w <= tile else int(np.ceil((w - tile) / stride + 1))
            assert len(grid) == expected_rows * expected_cols
            assert all(r >= 0 and c >= 0 for r, c in grid.offsets)
            assert grid.offsets[-1][0] + tile >= h and grid.offsets[-1][1] + tile >= w

    def test_boxes_are_clipped_into_tiles(self):
        """
        Caixa de lâmina cruzando a divisa entre dois tiles vira duas caixas recortadas.

        Tiles sem caixa recebem rótulo negativo; sem anotação o rótulo fica None.
        """
        image = np.ones((128, 256, 3))
        tiles, _ = crop_slide(image, 128, boxes=[(100, 10, 160, 40)])

        assert tiles[0].boxes == [(100, 10, 128, 40)]
        assert tiles[1].boxes == [(0, 10, 32, 40)]
        assert all(t.label is Label.POSITIVE for t in tiles)

        unlabeled, _ = crop_slide(image, 128)
        assert all(t.label is None for t in unlabeled)

        empty, _ = crop_slide(image, 128, boxes=[])
        assert all(t.label is Label.NEGATIVE for t in empty)

    @pytest.mark.parametrize("tile,stride", [(0, None), (-4, None), (64, 0)])
    def test_invalid_sizes_raise(self, tile, stride):
        with pytest.raises(ParameterError):
            crop_slide(np.ones((64, 64, 3)), tile, stride)

    def test_wrong_shape_raises(self):
        with pytest.raises(ShapeError):
            crop_slide(np.ones((64, 64)), 32)

    def test_tile_count_single_axis(self):
        assert tile_count(10, 32, 32) == 1
        assert tile_count(65, 32, 32) == 3


class TestImageIO:
    """
    Testes de leitura/gravação de PNG e da sobreposição de mapas de calor.
    """

    def test_save_load_quantization_bound(self, tmp_path):
        """Gravar e ler um tile aleatório erra no máximo 1/255 por pixel"""
        image = np.random.default_rng(4).uniform(size=(64, 64, 3))
        path = save_image(image, tmp_path / "tile.png")

        loaded = load_image(path)
        assert loaded.shape == image.shape
        assert np.abs(loaded - image).max() <= 1 / 255

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(DatasetError):
            load_image(tmp_path / "missing.png")

    def test_zero_heatmap_keeps_image(self):
        image = np.random.default_rng(5).uniform(size=(32, 32, 3))

        assert np.array_equal(blend_overlay(image, np.zeros((32, 32))), image)

    def test_unit_heatmap_blends_red_channel(self):
        image = np.random.default_rng(6).uniform(size=(32, 32, 3))
        out = blend_overlay(image, np.ones((32, 32)))

        np.testing.assert_allclose(out[..., 0], 0.5 * image[..., 0] + 0.5, atol=1e-12)
        assert np.array_equal(out[..., 1:], image[..., 1:])

    def test_heatmap_shape_mismatch_raises(self, tmp_path):
        with pytest.raises(ShapeError):
            save_overlay(np.ones((32, 32, 3)), np.ones((16, 16)), tmp_path / "x.png")
