"""
Aumento fotométrico (sem deslocamento espacial): brilho, contraste, matiz e ruído.

A máscara calculada na imagem aumentada é aplicada à original, então os pixels
precisam continuar alinhados.
"""
import math
from dataclasses import dataclass
from typing import Optional

import torch

# RGB <-> YIQ para rotação de matiz
_RGB_TO_YIQ = torch.tensor([
    [0.299, 0.587, 0.114],
    [0.596, -0.274, -0.322],
    [0.211, -0.523, 0.312],
])
_YIQ_TO_RGB = torch.linalg.inv(_RGB_TO_YIQ)


@dataclass(frozen=True)
class AugmentParams:
    brightness: float = 0.15
    contrast: float = 0.15
    hue: float = 0.05
    noise: float = 0.02

    def scaled(self, strength: float) -> "AugmentParams":
        return AugmentParams(
            self.brightness * strength, self.contrast * strength, self.hue * strength, self.noise * strength
        )


IDENTITY = AugmentParams(0.0, 0.0, 0.0, 0.0)


def _uniform(batch: int, amplitude: float, generator: Optional[torch.Generator], like: torch.Tensor) -> torch.Tensor:
    u = torch.rand(batch, generator=generator, dtype=torch.float64)
    return ((2 * u - 1) * amplitude).to(like)


def rotate_hue(images: torch.Tensor, angles: torch.Tensor) -> torch.Tensor:
    """Gira a matiz de cada imagem B×3×H×W pelo ângulo (radianos) no plano IQ"""
    to_yiq = _RGB_TO_YIQ.to(images)
    to_rgb = _YIQ_TO_RGB.to(images)
    yiq = torch.einsum("ij,bjhw->bihw", to_yiq, images)
    cos, sin = torch.cos(angles)[:, None, None], torch.sin(angles)[:, None, None]
    i, q = yiq[:, 1], yiq[:, 2]
    rotated = torch.stack([yiq[:, 0], cos * i - sin * q, sin * i + cos * q], dim=1)
    return torch.einsum("ij,bjhw->bihw", to_rgb, rotated)


def photometric_augment(
    images: torch.Tensor,
    generator: Optional[torch.Generator] = None,
    params: AugmentParams = AugmentParams(),
) -> torch.Tensor:
    """
    Aplica jitter fotométrico a um lote B×3×H×W em [0, 1].

    Com IDENTITY devolve exatamente a entrada.
    """
    if params == IDENTITY:
        return images
    batch = images.shape[0]
    out = images
    if params.brightness:
        out = out * (1.0 + _uniform(batch, params.brightness, generator, out))[:, None, None, None]
    if params.contrast:
        mean = out.mean(dim=(1, 2, 3), keepdim=True)
        out = (out - mean) * (1.0 + _uniform(batch, params.contrast, generator, out))[:, None, None, None] + mean
    if params.hue:
        out = rotate_hue(out, _uniform(batch, params.hue * 2 * math.pi, generator, out))
    if params.noise:
        noise = torch.randn(out.shape, generator=generator, dtype=torch.float64).to(out)
        out = out + params.noise * noise
    return out.clamp(0.0, 1.0)
