"""
Checkpoints: ZIP sem compressão com um `<nome>.npy` (float32 little-endian)
por array, em ordem de nome, mais `metadata.json` (chaves ordenadas).

O arquivo também é legível por numpy.load como .npz. Ler e regravar um
checkpoint produz um arquivo idêntico byte a byte.
"""
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import torch
import torch.nn as nn

from candida_screen.core.exceptions import CheckpointError
from candida_screen.core.log import get_logger
from candida_screen.schemas.checkpoint_schema import CheckpointKind, CheckpointMetadata

logger = get_logger("checkpoint")

METADATA_MEMBER = "metadata.json"
ARRAY_DTYPE = np.dtype("<f4")
FIXED_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    """Arrays nomeados + metadados (tipo, arquitetura, semente, configuração)"""
    arrays: Dict[str, np.ndarray]
    metadata: CheckpointMetadata
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def architecture(self) -> str:
        return self.metadata.architecture

    def subset(self, prefix: str) -> Dict[str, np.ndarray]:
        """Arrays com o prefixo informado, sem o prefixo"""
        return {name[len(prefix):]: value for name, value in self.arrays.items() if name.startswith(prefix)}


def state_arrays(state: Mapping[str, torch.Tensor], prefix: str = "") -> Dict[str, np.ndarray]:
    return {
        f"{prefix}{name}": tensor.detach().cpu().numpy().astype(ARRAY_DTYPE)
        for name, tensor in state.items()
    }


def from_module(
    module: nn.Module,
    kind: CheckpointKind,
    seed: int = 0,
    config: Optional[Dict[str, Any]] = None,
    architecture: Optional[str] = None,
) -> Checkpoint:
    """Cria um checkpoint com todo o state_dict do módulo"""
    metadata = CheckpointMetadata(
        kind=kind,
        architecture=architecture or module.architecture,
        seed=seed,
        config=config or {},
    )
    return Checkpoint(arrays=state_arrays(module.state_dict()), metadata=metadata)


def load_state(module: nn.Module, arrays: Mapping[str, np.ndarray]) -> nn.Module:
    """
    Copia os arrays para o state_dict do módulo.

    Raises:
        CheckpointError: nomes ausentes, inesperados ou com formato diferente
    """
    state = module.state_dict()
    missing = set(state) - set(arrays)
    if missing:
        raise CheckpointError("Arrays ausentes no checkpoint", missing)
    unexpected = set(arrays) - set(state)
    if unexpected:
        raise CheckpointError("Arrays inesperados no checkpoint", unexpected)
    mismatched = [name for name, tensor in state.items() if tuple(tensor.shape) != tuple(np.shape(arrays[name]))]
    if mismatched:
        raise CheckpointError("Arrays com formato incompatível", mismatched)

    with torch.no_grad():
        for name, tensor in state.items():
            tensor.copy_(torch.as_tensor(np.asarray(arrays[name])).to(tensor.dtype))
    return module


def load_pretrained(encoder: nn.Module, checkpoint: Checkpoint) -> nn.Module:
    """
    Carrega os pesos de um checkpoint de encoder.

    Raises:
        CheckpointError: arquitetura diferente ou nomes/formatos incompatíveis
    """
    if checkpoint.architecture != encoder.architecture:
        raise CheckpointError(
            f"Arquitetura do checkpoint ({checkpoint.architecture}) difere do encoder ({encoder.architecture})"
        )
    return load_state(encoder, checkpoint.arrays)


class CheckpointRepository:
    """Leitura e escrita do contêiner de checkpoints"""

    @staticmethod
    def save(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
        """
        Grava o checkpoint de forma determinística.

        Args:
            checkpoint: Arrays e metadados
            path: Arquivo de destino

        Returns:
            Path: Caminho gravado
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
            for name in sorted(checkpoint.arrays):
                buffer = io.BytesIO()
                # mantém arrays 0-d (num_batches_tracked)
                array = np.require(checkpoint.arrays[name], dtype=ARRAY_DTYPE, requirements="C")
                np.lib.format.write_array(buffer, array, allow_pickle=False)
                archive.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=FIXED_TIMESTAMP), buffer.getvalue())
            metadata = checkpoint.metadata.model_dump(mode="json")
            metadata.update(checkpoint.extra)
            payload = json.dumps(metadata, sort_keys=True, indent=2).encode("utf-8")
            archive.writestr(zipfile.ZipInfo(METADATA_MEMBER, date_time=FIXED_TIMESTAMP), payload)
        logger.info(f"Checkpoint {checkpoint.metadata.kind} gravado em {path} ({len(checkpoint.arrays)} arrays)")
        return path

    @staticmethod
    def load(path: Union[str, Path]) -> Checkpoint:
        """
        Lê um checkpoint

        Raises:
            CheckpointError: arquivo ausente ou corrompido
        """
        path = Path(path)
        if not path.is_file():
            raise CheckpointError(f"Checkpoint {path} não encontrado")
        try:
            with zipfile.ZipFile(path, "r") as archive:
                arrays = {}
                metadata = None
                for member in archive.namelist():
                    if member == METADATA_MEMBER:
                        metadata = json.loads(archive.read(member).decode("utf-8"))
                    elif member.endswith(".npy"):
                        with archive.open(member) as fh:
                            arrays[member[:-4]] = np.lib.format.read_array(fh, allow_pickle=False)
        except (zipfile.BadZipFile, ValueError, OSError) as e:
            raise CheckpointError(f"Checkpoint {path} corrompido: {e}") from e
        if metadata is None:
            raise CheckpointError(f"Checkpoint {path} sem {METADATA_MEMBER}")
        known = set(CheckpointMetadata.model_fields)
        extra = {key: value for key, value in metadata.items() if key not in known}
        try:
            parsed = CheckpointMetadata(**{key: value for key, value in metadata.items() if key in known})
        except ValueError as e:
            raise CheckpointError(f"Metadados inválidos em {path}: {e}") from e
        return Checkpoint(arrays=arrays, metadata=parsed, extra=extra)

    @staticmethod
    def load_kind(path: Union[str, Path], kind: CheckpointKind) -> Checkpoint:
        checkpoint = CheckpointRepository.load(path)
        if checkpoint.metadata.kind != kind:
            raise CheckpointError(f"Checkpoint {path} é do tipo {checkpoint.metadata.kind}, esperado {kind}")
        return checkpoint
