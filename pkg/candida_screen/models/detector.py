"""
Detector de uma etapa (pirâmide de features + cabeça de âncoras) usado no
pré-treino do encoder.
"""
import math
from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from candida_screen.models.encoder import ResidualEncoder
from candida_screen.services.anchors import ANCHORS_PER_CELL

FPN_CHANNELS = 64
PRIOR_PROBABILITY = 0.01


class FeaturePyramid(nn.Module):
    """Pirâmide top-down sobre C2, C3 e C4"""

    def __init__(self, in_channels: Tuple[int, int, int], channels: int = FPN_CHANNELS):
        super().__init__()
        self.lateral = nn.ModuleList([nn.Conv2d(c, channels, 1) for c in in_channels])
        self.output = nn.ModuleList([nn.Conv2d(channels, channels, 3, padding=1) for _ in in_channels])

    def forward(self, features: List[torch.Tensor]) -> List[torch.Tensor]:
        laterals = [conv(f) for conv, f in zip(self.lateral, features)]
        for i in range(len(laterals) - 1, 0, -1):
            laterals[i - 1] = laterals[i - 1] + F.interpolate(laterals[i], size=laterals[i - 1].shape[-2:], mode="nearest")
        return [conv(x) for conv, x in zip(self.output, laterals)]


def _subnet(channels: int, out_channels: int, depth: int = 2) -> nn.Sequential:
    layers = []
    for _ in range(depth):
        layers += [nn.Conv2d(channels, channels, 3, padding=1), nn.ReLU(inplace=True)]
    layers.append(nn.Conv2d(channels, out_channels, 3, padding=1))
    return nn.Sequential(*layers)


class DetectionHead(nn.Module):
    """
    Sub-redes de classificação e regressão compartilhadas entre níveis.

    O viés final da classificação começa em −log((1−π)/π) para que toda
    âncora comece com probabilidade π.
    """

    def __init__(self, channels: int = FPN_CHANNELS, anchors_per_cell: int = ANCHORS_PER_CELL):
        super().__init__()
        self.anchors_per_cell = anchors_per_cell
        self.cls_subnet = _subnet(channels, anchors_per_cell)
        self.box_subnet = _subnet(channels, anchors_per_cell * 4)
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.normal_(module.weight, std=0.01)
                nn.init.zeros_(module.bias)
        nn.init.constant_(self.cls_subnet[-1].bias, -math.log((1 - PRIOR_PROBABILITY) / PRIOR_PROBABILITY))

    def forward(self, levels: List[torch.Tensor]) -> Tuple[torch.Tensor, torch.Tensor]:
        cls_out, box_out = [], []
        for x in levels:
            n = x.shape[0]
            # N×A×H×W -> N×(H·W·A), na mesma ordem de generate_anchors
            cls_out.append(self.cls_subnet(x).permute(0, 2, 3, 1).reshape(n, -1))
            box_out.append(self.box_subnet(x).permute(0, 2, 3, 1).reshape(n, -1, 4))
        return torch.cat(cls_out, dim=1), torch.cat(box_out, dim=1)


class Detector(nn.Module):
    """Encoder compartilhado + pirâmide + cabeça; retorna logits e offsets por âncora"""

    def __init__(self, encoder: ResidualEncoder):
        super().__init__()
        self.encoder = encoder
        widths = encoder.widths
        self.fpn = FeaturePyramid((widths[1], widths[2], widths[3]))
        self.head = DetectionHead()

    @property
    def architecture(self) -> str:
        return f"retina-fpn{FPN_CHANNELS}-a{ANCHORS_PER_CELL}-{self.encoder.architecture}"

    def head_state(self) -> dict:
        """Parâmetros fora do encoder (gravados em checkpoint separado)"""
        return {name: value for name, value in self.state_dict().items() if not name.startswith("encoder.")}

    def forward(self, pixels: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        features = self.encoder(pixels)
        levels = self.fpn([features.c2, features.c3, features.c4])
        return self.head(levels)
