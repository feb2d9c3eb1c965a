"""
Perdas contrastivas de orientação por atenção e objetivo total de treino.
"""
from dataclasses import dataclass
from typing import Dict, Union

import torch
import torch.nn.functional as F

from candida_screen.core.exceptions import ParameterError, ShapeError

Scalar = Union[float, torch.Tensor]


@dataclass
class LossBundle:
    """
    Componentes da perda de um passo.

    l_cl = l_tri + l_am + l_focus; total = l_ce + alpha·l_cl.
    """
    l_ce: torch.Tensor
    l_tri: torch.Tensor
    l_am: torch.Tensor
    l_focus: torch.Tensor
    l_cl: torch.Tensor
    total: torch.Tensor
    alpha: float

    def as_floats(self) -> Dict[str, float]:
        return {
            "l_ce": self.l_ce.detach().item(),
            "l_tri": self.l_tri.detach().item(),
            "l_am": self.l_am.detach().item(),
            "l_focus": self.l_focus.detach().item(),
            "total": self.total.detach().item(),
        }


def _as_tensor(value: Scalar) -> torch.Tensor:
    return value if isinstance(value, torch.Tensor) else torch.tensor(float(value), dtype=torch.float64)


def triplet(
    f_aug: torch.Tensor, f_orig: torch.Tensor, f_masked: torch.Tensor, margin: float = 1.0
) -> torch.Tensor:
    """
    max(0, ‖F_aug − F_orig‖ − ‖F_aug − F_masked‖ + margin), média no lote.

    Âncora F_aug, positivo F_orig, negativo F_masked.
    """
    if f_aug.shape != f_orig.shape or f_aug.shape != f_masked.shape:
        raise ShapeError(
            f"Embeddings com formatos diferentes: {tuple(f_aug.shape)}, {tuple(f_orig.shape)}, {tuple(f_masked.shape)}"
        )
    if margin < 0:
        raise ParameterError(f"margin deve ser >= 0, recebido {margin}")
    positive = torch.linalg.vector_norm(f_aug - f_orig, dim=-1)
    negative = torch.linalg.vector_norm(f_aug - f_masked, dim=-1)
    return F.relu(positive - negative + margin).mean()


def attention_mining(score_masked: Scalar) -> torch.Tensor:
    """Score candida da imagem mascarada (média no lote), a ser minimizado"""
    score = _as_tensor(score_masked)
    if score.numel() == 0:
        raise ShapeError("score_masked vazio")
    if bool((score < 0).any()) or bool((score > 1).any()):
        raise ParameterError("score_masked deve estar em [0, 1]")
    return score.mean()


def focus(mask: torch.Tensor) -> torch.Tensor:
    """Média aritmética de M sobre todos os pixels"""
    if mask.numel() == 0:
        raise ShapeError("Máscara vazia")
    return mask.mean()


def total_loss(
    logits_aug: torch.Tensor,
    labels: torch.Tensor,
    l_tri: Scalar,
    l_am: Scalar,
    l_focus: Scalar,
    alpha: float = 0.1,
) -> LossBundle:
    """
    Combina CE da imagem aumentada com as perdas contrastivas.

    Raises:
        ParameterError: rótulo fora de {0, 1}
    """
    labels = torch.as_tensor(labels, device=logits_aug.device)
    if bool((labels < 0).any()) or bool((labels > 1).any()):
        raise ParameterError(f"Rótulos devem estar em {{0, 1}}, recebido {labels.tolist()}")
    l_ce = F.cross_entropy(logits_aug, labels.long())
    l_tri, l_am, l_focus = (_as_tensor(v).to(l_ce) for v in (l_tri, l_am, l_focus))
    l_cl = l_tri + l_am + l_focus
    return LossBundle(
        l_ce=l_ce, l_tri=l_tri, l_am=l_am, l_focus=l_focus, l_cl=l_cl, total=l_ce + alpha * l_cl, alpha=alpha
    )
