# Infraestrutura de execução: sementes, determinismo e fábrica de DataLoaders
import random
from typing import Callable, Optional

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset


def seed_everything(seed: int) -> torch.Generator:
    """
    Fixa todas as fontes de aleatoriedade e ativa algoritmos determinísticos.

    Toda aleatoriedade do pipeline deriva da semente da execução (--seed).

    Args:
        seed: Semente não negativa

    Returns:
        torch.Generator: Gerador dedicado já semeado
    """
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    return make_generator(seed)


def make_generator(seed: int) -> torch.Generator:
    """Cria um torch.Generator de CPU semeado"""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def get_device(name: str = "cpu") -> torch.device:
    """Resolve o dispositivo configurado, caindo para CPU quando CUDA não existe"""
    if name.startswith("cuda") and not torch.cuda.is_available():
        return torch.device("cpu")
    return torch.device(name)


def make_loader(
    dataset: Dataset,
    batch_size: int,
    seed: int,
    shuffle: bool = True,
    num_workers: int = 0,
    collate_fn: Optional[Callable] = None,
) -> DataLoader:
    """
    Cria um DataLoader reprodutível.

    A ordem dos lotes depende apenas da semente; com num_workers=0 o treino
    é bit-reprodutível.

    Example:
        loader = make_loader(dataset, batch_size=8, seed=config.seed)
        for batch in loader:
            ...
    """
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        num_workers=num_workers,
        collate_fn=collate_fn,
        generator=make_generator(seed),
        drop_last=False,
    )
