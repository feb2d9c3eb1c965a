import numpy as np
import pytest
import torch

from candida_screen.controllers.eval_controller import EvalController
from candida_screen.controllers.synth_controller import SynthController
from candida_screen.controllers.tile_controller import TileController
from candida_screen.controllers.wsi_controller import WSIController
from candida_screen.core.config import default_config
from candida_screen.repositories.checkpoint_repository import CheckpointRepository
from candida_screen.repositories.dataset_repository import DatasetRepository
from candida_screen.schemas.synth_schema import SynthConfig
from candida_screen.schemas.tile_schema import TileResult
from candida_screen.services.data_synth import gen_tile

TEST_TILE_SIZE = 64

# RunConfig reduzido para CPU: preset "tiny" (4 canais por estágio), tiles de
# 64 px, uma época por etapa e 3 dobras. PT desligado; os testes de PT ligam.
TINY_OVERRIDES = dict(
    preset="tiny",
    tile_size=TEST_TILE_SIZE,
    embed_dim=16,
    ssa_depth=1,
    ssa_heads=2,
    query_grid=4,
    agg_depth=1,
    agg_heads=2,
    epochs=1,
    detect_epochs=1,
    wsi_epochs=2,
    batch_tile=4,
    batch_detect=4,
    batch_wsi=4,
    n_folds=3,
    k=3,
    pt=False,
)


@pytest.fixture
def tiny_config(tmp_path):
    """
    Fixture com um RunConfig reduzido para testes em CPU.

    Usa TINY_OVERRIDES, o suficiente para exercitar todos os caminhos de
    treino em poucos segundos. Os logs vão para o tmp_path do teste.
    """
    return default_config(**TINY_OVERRIDES, log_dir=tmp_path / "logs")


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """
    Fixture que gera uma única vez um dataset sintético pequeno.

    Conteúdo: 16 tiles avulsos (8 positivos) e 6 lâminas de 4 tiles
    (3 positivas com 1 tile positivo cada), todos com 64 px e semente 0.
    O diretório é compartilhado pela sessão e não deve ser alterado pelos testes.

    Returns:
        Path: Raiz do dataset
    """
    root = tmp_path_factory.mktemp("dataset")
    SynthController.gen_dataset(SynthConfig(
        out_dir=root,
        n_tiles=16,
        tile_size=TEST_TILE_SIZE,
        n_slides=6,
        tiles_per_slide=4,
        positive_tiles_per_slide=1,
        seed=0,
    ))
    return root


@pytest.fixture
def repository(synth_root):
    return DatasetRepository(synth_root)


@pytest.fixture
def positive_tile():
    """Tile positivo determinístico (semente 7, 128 px)"""
    return gen_tile(7, "positive", size=128, tile_id="pos")


@pytest.fixture
def negative_tile():
    return gen_tile(0, "negative", size=128, tile_id="neg")


@pytest.fixture
def make_results():
    """
    Fábrica de TileResults a partir de uma lista de scores.

    Os logits são (0, logit(score)), de forma que o score do resultado é o
    próprio valor informado; o embedding é um vetor aleatório de dimensão `dim`.
    """
    def _make(scores, dim=8, seed=0, prefix="t"):
        rng = np.random.default_rng(seed)
        results = []
        for index, score in enumerate(scores):
            p = min(max(float(score), 1e-9), 1 - 1e-9)
            logits = (0.0, float(np.log(p / (1 - p))))
            results.append(TileResult.from_logits(logits, rng.normal(size=dim).astype(np.float32), f"{prefix}{index}"))
        return results
    return _make


@pytest.fixture(autouse=True)
def fixed_torch_seed():
    """Isola a aleatoriedade do torch entre testes"""
    torch.manual_seed(0)
    yield


@pytest.fixture(scope="session")
def trained_tile(synth_root, tmp_path_factory):
    """
    Fixture de sessão: classificador de tiles (SSA + CL, sem PT) treinado
    uma época na dobra 0 do pool avulso.

    Returns:
        Tuple[TileExperiment, TileTrainResult]
    """
    config = default_config(**TINY_OVERRIDES, log_dir=tmp_path_factory.mktemp("logs"))
    experiment = EvalController.prepare_tiles(DatasetRepository(synth_root), config)
    fold = experiment.folds[0]
    result = TileController.train_tile_classifier(
        experiment.dataset(fold.train), config, val_set=experiment.dataset(fold.val)
    )
    return experiment, result


@pytest.fixture(scope="session")
def pipeline_ckpt(synth_root, trained_tile, tmp_path_factory):
    """
    Fixture de sessão: checkpoint wsi_pipeline (agregador transformer)
    treinado sobre todas as lâminas e gravado em disco.

    Returns:
        Path: Arquivo wsi.ckpt
    """
    _, tile_result = trained_tile
    config = default_config(**TINY_OVERRIDES, log_dir=tmp_path_factory.mktemp("logs"))
    repository = DatasetRepository(synth_root)
    model = TileController.load_classifier(tile_result.checkpoint)
    bundles = WSIController.score_manifests(model, repository, repository.list_manifests(), config.batch_tile)
    trained = WSIController.train_wsi(bundles, tile_result.checkpoint, config)
    return CheckpointRepository.save(trained.checkpoint, tmp_path_factory.mktemp("ckpt") / "wsi.ckpt")
