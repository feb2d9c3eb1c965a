"""
Encoder residual compartilhado por detector, classificador SSA e Grad-CAM.

Saídas C1..C4 com strides 4, 8, 16 e 32 em relação à entrada.
"""
from dataclasses import dataclass
from typing import Dict, List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from candida_screen.core.exceptions import ParameterError, ShapeError

ENCODER_STRIDE = 32


@dataclass(frozen=True)
class EncoderPreset:
    name: str
    widths: Tuple[int, int, int, int]
    blocks: Tuple[int, int, int, int]

    @property
    def architecture(self) -> str:
        widths = ".".join(str(w) for w in self.widths)
        blocks = ".".join(str(b) for b in self.blocks)
        return f"resnet-{self.name}-w{widths}-b{blocks}"


PRESETS: Dict[str, EncoderPreset] = {
    "tiny": EncoderPreset("tiny", (4, 4, 4, 4), (1, 1, 1, 1)),
    "toy": EncoderPreset("toy", (8, 16, 32, 64), (1, 1, 1, 1)),
    "desk": EncoderPreset("desk", (16, 32, 64, 128), (2, 2, 2, 2)),
    "resnet18": EncoderPreset("resnet18", (64, 128, 256, 512), (2, 2, 2, 2)),
}


def get_preset(name: str) -> EncoderPreset:
    if name not in PRESETS:
        raise ParameterError(f"Preset desconhecido: {name}. Opções: {', '.join(PRESETS)}")
    return PRESETS[name]


@dataclass
class MultiScaleFeatures:
    """Saídas dos quatro estágios do encoder (do nível baixo ao alto)"""
    c1: torch.Tensor
    c2: torch.Tensor
    c3: torch.Tensor
    c4: torch.Tensor

    def as_list(self) -> List[torch.Tensor]:
        return [self.c1, self.c2, self.c3, self.c4]


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.shortcut = nn.Identity()
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class ResidualEncoder(nn.Module):
    """
    Encoder estilo ResNet: stem (conv stride 2 + max-pool) seguido de quatro
    estágios residuais. O primeiro estágio mantém a resolução do stem (/4);
    os demais reduzem por 2.
    """

    def __init__(self, preset: str = "desk"):
        super().__init__()
        self.preset = get_preset(preset)
        widths, blocks = self.preset.widths, self.preset.blocks
        self.stem = nn.Sequential(
            nn.Conv2d(3, widths[0], 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        stages = []
        in_channels = widths[0]
        for index, (width, n_blocks) in enumerate(zip(widths, blocks)):
            stride = 1 if index == 0 else 2
            layers = [BasicBlock(in_channels, width, stride)]
            layers += [BasicBlock(width, width) for _ in range(n_blocks - 1)]
            stages.append(nn.Sequential(*layers))
            in_channels = width
        self.stages = nn.ModuleList(stages)
        self.frozen_stages = 0
        self._init_weights()

    def _init_weights(self) -> None:
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    @property
    def architecture(self) -> str:
        return self.preset.architecture

    @property
    def widths(self) -> Tuple[int, int, int, int]:
        return self.preset.widths

    def forward(self, x: torch.Tensor) -> MultiScaleFeatures:
        height, width = x.shape[-2:]
        if height % ENCODER_STRIDE or width % ENCODER_STRIDE:
            raise ShapeError(f"Entrada {height}×{width} deve ser divisível por {ENCODER_STRIDE}")
        x = self.stem(x)
        outputs = []
        for stage in self.stages:
            x = stage(x)
            outputs.append(x)
        return MultiScaleFeatures(*outputs)

    def _frozen_modules(self) -> List[nn.Module]:
        if self.frozen_stages == 0:
            return []
        return [self.stem, *self.stages[:self.frozen_stages]]

    def train(self, mode: bool = True) -> "ResidualEncoder":
        super().train(mode)
        # BatchNorm congelado continua em modo de inferência
        for module in self._frozen_modules():
            module.eval()
        return self


def encode(encoder: ResidualEncoder, pixels: torch.Tensor) -> MultiScaleFeatures:
    """Executa o encoder em um lote N×3×H×W (ou um único tile 3×H×W)"""
    if pixels.dim() == 3:
        pixels = pixels.unsqueeze(0)
    return encoder(pixels)


def freeze_prefix(encoder: ResidualEncoder, n_stages: int) -> ResidualEncoder:
    """
    Congela stem + primeiros n_stages estágios; os demais parâmetros continuam treináveis.

    Raises:
        ParameterError: n_stages fora de 0..4
    """
    if not 0 <= n_stages <= len(encoder.stages):
        raise ParameterError(f"n_stages deve estar em 0..{len(encoder.stages)}, recebido {n_stages}")
    for parameter in encoder.parameters():
        parameter.requires_grad_(True)
    encoder.frozen_stages = n_stages
    for module in encoder._frozen_modules():
        for parameter in module.parameters():
            parameter.requires_grad_(False)
    encoder.train(encoder.training)
    return encoder
