from candida_screen.models.aggregator import MLPAggregator, TopKTransformer
from candida_screen.models.classifier import TileClassifier, TileOutput, classify
from candida_screen.models.detector import Detector
from candida_screen.models.encoder import MultiScaleFeatures, ResidualEncoder, encode, freeze_prefix
from candida_screen.models.ssa import SSADecoder, TokenSequence, ssa_forward

__all__ = [
    "Detector",
    "MLPAggregator",
    "MultiScaleFeatures",
    "ResidualEncoder",
    "SSADecoder",
    "TileClassifier",
    "TileOutput",
    "TokenSequence",
    "TopKTransformer",
    "classify",
    "encode",
    "freeze_prefix",
    "ssa_forward",
]
