import argparse
import subprocess
from pathlib import Path
from typing import Any, Dict

from candida_screen import __version__
from candida_screen.core.config import RunConfig
from candida_screen.core.exceptions import UsageError

# Flags da CLI que sobrescrevem campos do RunConfig (nome do atributo em args -> campo)
CONFIG_FLAGS = {
    "seed": "seed",
    "k": "k",
    "alpha": "alpha",
    "pt": "pt",
    "ssa": "ssa",
    "cl": "cl",
    "epochs": "epochs",
    "detect_epochs": "detect_epochs",
    "wsi_epochs": "wsi_epochs",
    "preset": "preset",
    "tile_size": "tile_size",
    "aggregator": "aggregator",
    "device": "device",
}


class CliParser(argparse.ArgumentParser):
    """ArgumentParser que sinaliza erros de uso com UsageError em vez de encerrar o processo"""

    def error(self, message: str):
        raise UsageError(message)


def common_parent() -> argparse.ArgumentParser:
    """Flags compartilhadas por todos os subcomandos"""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None, help="Arquivo TOML com campos do RunConfig")
    parent.add_argument("--seed", type=int, default=None, help="Semente de toda a aleatoriedade")
    parent.add_argument("--out", type=Path, default=Path("."), help="Diretório de saída da execução")
    parent.add_argument("--device", default=None, help="Dispositivo torch (cpu, cuda)")
    return parent


def model_parent() -> argparse.ArgumentParser:
    """Flags de treino/arquitetura e chaves da ablação"""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--data", type=Path, default=None, help="Diretório do dataset sintético")
    parent.add_argument("--ckpt", type=Path, default=None, help="Checkpoint de entrada")
    parent.add_argument("--k", type=int, default=None, help="Tiles mantidos na agregação top-k (padrão 10)")
    parent.add_argument("--alpha", type=float, default=None, help="Peso das perdas contrastivas (padrão 0.1)")
    parent.add_argument("--pt", action=argparse.BooleanOptionalAction, default=None, help="Pré-treino por detecção")
    parent.add_argument("--ssa", action=argparse.BooleanOptionalAction, default=None, help="Cabeça skip self-attention")
    parent.add_argument("--cl", action=argparse.BooleanOptionalAction, default=None, help="Perdas contrastivas")
    parent.add_argument("--epochs", type=int, default=None)
    parent.add_argument("--detect-epochs", dest="detect_epochs", type=int, default=None)
    parent.add_argument("--wsi-epochs", dest="wsi_epochs", type=int, default=None)
    parent.add_argument("--preset", default=None, help="tiny, toy, desk ou resnet18")
    parent.add_argument("--tile-size", dest="tile_size", type=int, default=None)
    parent.add_argument("--aggregator", default=None, help="transformer, mlp ou threshold")
    parent.add_argument("--fold", type=int, default=0, help="Dobra usada para treino/validação/teste")
    return parent


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig com precedência flags > TOML > ambiente > padrões"""
    overrides = {field: getattr(args, attr, None) for attr, field in CONFIG_FLAGS.items()}
    return RunConfig.load(getattr(args, "config", None), **overrides)


def require(args: argparse.Namespace, *names: str) -> None:
    """Garante flags obrigatórias de um subcomando"""
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name, None) is None]
    if missing:
        raise UsageError(f"{args.verb}: flag obrigatória ausente: {', '.join(missing)}")


def describe_version() -> str:
    """Versão no estilo git describe, ou a versão do pacote fora de um repositório git"""
    try:
        completed = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    described = completed.stdout.strip()
    return described if completed.returncode == 0 and described else __version__


def config_echo(config: RunConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")
