from dataclasses import dataclass
from pathlib import Path

from tqdm_loggable.auto import tqdm

from candida_screen.core.exceptions import DatasetError, ScreeningError
from candida_screen.core.log import get_logger, log_stage
from candida_screen.repositories.dataset_repository import DatasetRepository
from candida_screen.schemas.synth_schema import Label, SynthConfig
from candida_screen.services.data_synth import check_manifest, plan_dataset

logger = get_logger("synth")


@dataclass
class DatasetSummary:
    root: Path
    n_tiles: int
    n_positive: int
    n_slides: int
    n_positive_slides: int


class SynthController:
    """
    Controller responsável pela geração do dataset sintético em disco
    """

    @staticmethod
    def gen_dataset(config: SynthConfig) -> DatasetSummary:
        """
        Gera tiles, tabela de anotações e manifestos de lâmina.

        Args:
            config: Parâmetros de geração

        Returns:
            DatasetSummary: Contagens do que foi gravado

        Raises:
            DatasetError: contagens nulas, diretório não gravável ou manifesto inconsistente
        """
        try:
            plan = plan_dataset(config)
            repository = DatasetRepository(config.out_dir)
            repository.ensure_dir(DatasetRepository.TILES_DIR)

            with log_stage("synth", tiles=len(plan.tiles), slides=len(plan.manifests)):
                tiles = []
                for tile in tqdm(plan.render(config.tile_size), total=len(plan.tiles), desc="Gerando tiles"):
                    repository.write_tile(tile)
                    # pixels não são necessários para a tabela
                    tiles.append(tile.model_copy(update={"pixels": tile.pixels[:1, :1]}))
                repository.write_annotations(tiles)

                labels = {tile.tile_id: tile.label for tile in tiles}
                for manifest in plan.manifests:
                    if not check_manifest(manifest, labels):
                        raise DatasetError(f"Manifesto {manifest.slide_id} inconsistente com os rótulos dos tiles")
                    repository.write_manifest(manifest)

            summary = DatasetSummary(
                root=Path(config.out_dir),
                n_tiles=len(tiles),
                n_positive=sum(1 for t in tiles if t.label is Label.POSITIVE),
                n_slides=len(plan.manifests),
                n_positive_slides=sum(1 for m in plan.manifests if m.slide_label is Label.POSITIVE),
            )
            logger.info(
                f"Dataset gravado em {summary.root}: {summary.n_tiles} tiles ({summary.n_positive} positivos), "
                f"{summary.n_slides} lâminas ({summary.n_positive_slides} positivas)"
            )
            return summary

        except ScreeningError:
            raise
        except OSError as e:
            raise DatasetError(f"Erro ao gravar o dataset em {config.out_dir}: {e}") from e
