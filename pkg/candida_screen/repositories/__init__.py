from candida_screen.repositories.checkpoint_repository import (
    Checkpoint,
    CheckpointRepository,
    from_module,
    load_pretrained,
    load_state,
)
from candida_screen.repositories.dataset_repository import DatasetRepository, DetectionDataset, TileDataset
from candida_screen.repositories.results_repository import ResultsRepository

__all__ = [
    "Checkpoint",
    "CheckpointRepository",
    "DatasetRepository",
    "DetectionDataset",
    "ResultsRepository",
    "TileDataset",
    "from_module",
    "load_pretrained",
    "load_state",
]
