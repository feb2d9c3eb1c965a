from pathlib import Path
from typing import Any, Dict, Literal, Optional

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from candida_screen.core.exceptions import ParameterError


class RunConfig(BaseSettings):
    """
    Configuração de uma execução do pipeline.

    Padrões: Adam com lr 3e-4, 100 épocas, lotes 8/8/16, top-10 e alpha 0.1,
    com presets reduzidos para execução em CPU.

    Precedência: flags da CLI > arquivo TOML (--config) > variáveis de ambiente
    (prefixo CANDIDA_) / .env > padrões.
    """

    # Otimização
    lr: float = Field(3e-4, gt=0, description="Taxa de aprendizado do Adam (constante)")
    epochs: int = Field(100, ge=0, description="Épocas do classificador de tiles")
    detect_epochs: int = Field(20, ge=0, description="Épocas do pré-treino de detecção")
    wsi_epochs: int = Field(100, ge=0, description="Épocas do agregador de lâmina")
    batch_detect: int = Field(8, gt=0)
    batch_tile: int = Field(8, gt=0)
    batch_wsi: int = Field(16, gt=0)
    seed: int = Field(0, ge=0)

    # Flags da ablação (PT, SSA, CL)
    pt: bool = True
    ssa: bool = True
    cl: bool = True

    # Arquitetura
    preset: Literal["tiny", "toy", "desk", "resnet18"] = "desk"
    tile_size: int = Field(128, ge=32)
    embed_dim: int = Field(128, gt=0)
    ssa_depth: int = Field(2, ge=1)
    ssa_heads: int = Field(4, ge=1)
    query_grid: int = Field(16, ge=1)
    freeze_stages: int = Field(1, ge=0, le=4)

    # Orientação por atenção e perdas
    alpha: float = Field(0.1, ge=0)
    mask_sigma: float = 0.5
    mask_scale: float = Field(10.0, gt=0)
    mask_mode: Literal["soft", "subtract"] = "soft"
    margin: float = Field(1.0, ge=0)
    cl_positive_only: bool = True
    augment_strength: float = Field(1.0, ge=0)

    # Detector
    iou_pos: float = Field(0.5, ge=0, le=1)
    iou_neg: float = Field(0.4, ge=0, le=1)
    focal_alpha: float = Field(0.25, ge=0, le=1)
    focal_gamma: float = Field(2.0, ge=0)
    detect_fraction: float = Field(0.5, ge=0, lt=1)

    # Agregação de lâmina
    k: int = Field(10, ge=1)
    aggregator: Literal["transformer", "mlp", "threshold"] = "transformer"
    agg_depth: int = Field(2, ge=1)
    agg_heads: int = Field(4, ge=1)
    tau: float = Field(0.5, ge=0, le=1)

    # Avaliação e execução
    n_folds: int = Field(5, ge=2)
    num_workers: int = Field(0, ge=0)
    device: str = "cpu"
    log_dir: Path = Path("logs")

    model_config = SettingsConfigDict(
        env_prefix="CANDIDA_",
        env_file=".env",
        extra="ignore"  # Ignora campos extras no .env que não estão definidos aqui
    )

    @model_validator(mode="after")
    def check_thresholds(self) -> "RunConfig":
        """Garante iou_neg <= iou_pos e divisibilidade do embedding pelas cabeças"""
        if self.iou_neg > self.iou_pos:
            raise ValueError("iou_neg deve ser menor ou igual a iou_pos")
        if self.embed_dim % self.ssa_heads or self.embed_dim % self.agg_heads:
            raise ValueError("embed_dim deve ser divisível por ssa_heads e agg_heads")
        return self

    @classmethod
    def load(cls, path: Optional[Path] = None, **overrides: Any) -> "RunConfig":
        """
        Monta a configuração a partir de um arquivo TOML opcional e de sobrescritas explícitas.

        Args:
            path: Arquivo TOML com chaves planas iguais aos campos de RunConfig
            **overrides: Valores explícitos (flags da CLI); None é ignorado

        Returns:
            RunConfig validado

        Raises:
            ParameterError: arquivo inexistente ou valores inválidos
        """
        values: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ParameterError(f"Arquivo de configuração {path} não encontrado")
            with path.open("rb") as fh:
                values.update(tomllib.load(fh))
        values.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return cls(**values)
        except ValueError as e:
            raise ParameterError(f"Configuração inválida: {e}") from e


def default_config(**overrides: Any) -> RunConfig:
    """Atalho para testes e scripts: padrões + sobrescritas"""
    return RunConfig.load(None, **overrides)
