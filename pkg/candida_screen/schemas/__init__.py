from candida_screen.schemas.checkpoint_schema import CheckpointMetadata
from candida_screen.schemas.metrics_schema import FoldSplit, Metrics, MetricsReport
from candida_screen.schemas.synth_schema import CANDIDA_INDEX, Label, SlideManifest, StyleParams, SynthConfig, TileImage
from candida_screen.schemas.tile_schema import TileResult
from candida_screen.schemas.wsi_schema import TopKSelection, Verdict, WSIBundle

__all__ = [
    "CANDIDA_INDEX",
    "CheckpointMetadata",
    "FoldSplit",
    "Label",
    "Metrics",
    "MetricsReport",
    "SlideManifest",
    "StyleParams",
    "SynthConfig",
    "TileImage",
    "TileResult",
    "TopKSelection",
    "Verdict",
    "WSIBundle",
]
