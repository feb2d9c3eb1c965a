"""
Orientação por atenção: mapa bruto A, máscara M, imagem mascarada e Grad-CAM.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from candida_screen.core.exceptions import ParameterError, ShapeError
from candida_screen.models.ssa import TokenSequence
from candida_screen.schemas.synth_schema import CANDIDA_INDEX

MASK_MODES = ("soft", "subtract")


@dataclass
class AttentionArtifacts:
    """Mapa bruto A (B×H×W), máscara M (B×H×W) e imagem mascarada (B×3×H×W)"""
    raw: torch.Tensor
    mask: torch.Tensor
    masked: torch.Tensor


def extract_attention(tokens: TokenSequence, fc: nn.Linear, size: Tuple[int, int]) -> torch.Tensor:
    """
    Aplica a FC do classificador a cada token espacial, toma o canal candida,
    remonta a grade (row-major) e interpola bilinearmente até `size`.

    Returns:
        torch.Tensor: A com formato B×H×W (logits candida)
    """
    if tokens.grid is None:
        raise ShapeError("Sequência de tokens sem grade espacial")
    batch = tokens.tokens.shape[0]
    logits = fc(tokens.spatial)[..., CANDIDA_INDEX]
    grid = logits.reshape(batch, 1, tokens.grid[0], tokens.grid[1])
    upsampled = F.interpolate(grid, size=tuple(size), mode="bilinear", align_corners=False)
    return upsampled[:, 0]


def normalize_mask(raw: torch.Tensor, sigma: float = 0.5, scale: float = 10.0) -> torch.Tensor:
    """M = sigmoid(s·(A − σ)), elemento a elemento"""
    return torch.sigmoid(scale * (raw - sigma))


def apply_mask(image: torch.Tensor, mask: torch.Tensor, mode: str = "soft") -> torch.Tensor:
    """
    Remove da imagem a região indicada por M.

    soft: I ⊙ (1 − M); subtract: clamp(I − M, 0, 1).

    Args:
        image: B×3×H×W (ou 3×H×W)
        mask: B×H×W (ou H×W)
    """
    if mode not in MASK_MODES:
        raise ParameterError(f"mask_mode inválido: {mode}")
    if image.shape[-2:] != mask.shape[-2:] or image.dim() != mask.dim() + 1:
        raise ShapeError(f"Máscara {tuple(mask.shape)} incompatível com a imagem {tuple(image.shape)}")
    m = mask.unsqueeze(-3)
    if mode == "soft":
        return image * (1.0 - m)
    return torch.clamp(image - m, 0.0, 1.0)


def attention_artifacts(
    tokens: TokenSequence,
    fc: nn.Linear,
    image: torch.Tensor,
    sigma: float = 0.5,
    scale: float = 10.0,
    mode: str = "soft",
) -> AttentionArtifacts:
    raw = extract_attention(tokens, fc, image.shape[-2:])
    mask = normalize_mask(raw, sigma, scale)
    return AttentionArtifacts(raw=raw, mask=mask, masked=apply_mask(image, mask, mode))


def _logits_of(output) -> torch.Tensor:
    return output.logits if hasattr(output, "logits") else output


def grad_cam(
    model: nn.Module,
    pixels: torch.Tensor,
    target_class: int = CANDIDA_INDEX,
    target_layer: Optional[nn.Module] = None,
) -> torch.Tensor:
    """
    Grad-CAM sobre a camada alvo (padrão: último estágio do encoder, C4).

    heatmap = ReLU(Σ_c w_c·A_c), w_c = média espacial de ∂logit/∂A_c,
    interpolado até H×W e dividido pelo máximo (mapa nulo continua nulo).

    Args:
        model: Modelo que retorna logits ou um objeto com .logits
        pixels: 3×H×W ou 1×3×H×W
        target_class: 0 ou 1

    Returns:
        torch.Tensor: Mapa H×W em [0, 1]
    """
    if target_class not in (0, 1):
        raise ParameterError(f"target_class deve ser 0 ou 1, recebido {target_class}")
    if pixels.dim() == 3:
        pixels = pixels.unsqueeze(0)
    if target_layer is None:
        target_layer = model.encoder.stages[-1]

    captured = {}

    def forward_hook(module, inputs, output):
        captured["activation"] = output

        def save_gradient(grad):
            captured["gradient"] = grad

        output.register_hook(save_gradient)

    was_training = model.training
    model.eval()
    handle = target_layer.register_forward_hook(forward_hook)
    try:
        with torch.enable_grad():
            inputs = pixels.detach().clone().requires_grad_(True)
            logits = _logits_of(model(inputs))
            model.zero_grad(set_to_none=True)
            logits[0, target_class].backward()
            model.zero_grad(set_to_none=True)
    finally:
        handle.remove()
        model.train(was_training)

    activation = captured["activation"].detach()[0]
    gradient = captured["gradient"].detach()[0]
    weights = gradient.mean(dim=(1, 2))
    cam = F.relu((weights[:, None, None] * activation).sum(dim=0))
    cam = F.interpolate(cam[None, None], size=tuple(pixels.shape[-2:]), mode="bilinear", align_corners=False)[0, 0]
    cam = cam.clamp_min(0.0)
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    return cam
