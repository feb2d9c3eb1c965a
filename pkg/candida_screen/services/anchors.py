"""
Âncoras, atribuição de alvos, perdas e decodificação do detector de hifas.

Caixas de anotação usam (x_min, y_min, x_max, y_max); âncoras e offsets usam
(cx, cy, w, h) em pixels.
"""
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torchvision.ops import nms

from candida_screen.core.exceptions import DegenerateBoxError, ParameterError, ShapeError

ANCHOR_SCALES = (1.0, 2 ** (1.0 / 3.0), 2 ** (2.0 / 3.0))
ANCHOR_RATIOS = (0.2, 1.0, 5.0)
ANCHORS_PER_CELL = len(ANCHOR_SCALES) * len(ANCHOR_RATIOS)
PYRAMID_STRIDES = (8, 16, 32)

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


@dataclass
class AnchorSet:
    """Âncoras de todos os níveis concatenadas em ordem (nível, linha, coluna, âncora)"""
    boxes: np.ndarray  # A×4 (cx, cy, w, h)
    level_sizes: List[Tuple[int, int]]
    strides: Tuple[int, ...] = PYRAMID_STRIDES

    def __len__(self) -> int:
        return len(self.boxes)


@dataclass
class DetectionTargets:
    """Status por âncora (1 positivo, 0 negativo, -1 ignorar) e offsets de regressão"""
    labels: np.ndarray
    regression: np.ndarray
    matched: np.ndarray

    @property
    def n_positive(self) -> int:
        return int((self.labels == POSITIVE).sum())


def cell_anchors(stride: int) -> np.ndarray:
    """As 9 formas (w, h) de âncora de uma célula: base 4·stride, escalas × razões"""
    base = 4.0 * stride
    shapes = []
    for scale in ANCHOR_SCALES:
        for ratio in ANCHOR_RATIOS:
            shapes.append((base * scale * math.sqrt(ratio), base * scale / math.sqrt(ratio)))
    return np.array(shapes, dtype=np.float64)


def generate_anchors(image_size: Tuple[int, int], strides: Sequence[int] = PYRAMID_STRIDES) -> AnchorSet:
    """Gera âncoras densas (uma série por célula) para cada nível da pirâmide"""
    height, width = image_size
    all_boxes, sizes = [], []
    for stride in strides:
        rows, cols = height // stride, width // stride
        ys, xs = np.meshgrid((np.arange(rows) + 0.5) * stride, (np.arange(cols) + 0.5) * stride, indexing="ij")
        centers = np.stack([xs.ravel(), ys.ravel()], axis=1)
        shapes = cell_anchors(stride)
        boxes = np.concatenate(
            [np.repeat(centers, len(shapes), axis=0), np.tile(shapes, (len(centers), 1))], axis=1
        )
        all_boxes.append(boxes)
        sizes.append((rows, cols))
    return AnchorSet(boxes=np.concatenate(all_boxes, axis=0), level_sizes=sizes, strides=tuple(strides))


def cxcywh_to_xyxy(boxes: np.ndarray) -> np.ndarray:
    cx, cy, w, h = boxes.T
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)


def xyxy_to_cxcywh(boxes: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = boxes.T
    return np.stack([(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0], axis=1)


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matriz de IoU entre caixas xyxy (len(a) × len(b))"""
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def encode_offsets(anchors: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Offsets (Δcx, Δcy, Δlog w, Δlog h) de caixas cxcywh em relação às âncoras"""
    return np.stack([
        (gt[:, 0] - anchors[:, 0]) / anchors[:, 2],
        (gt[:, 1] - anchors[:, 1]) / anchors[:, 3],
        np.log(gt[:, 2] / anchors[:, 2]),
        np.log(gt[:, 3] / anchors[:, 3]),
    ], axis=1)


def assign_anchors(
    anchors: AnchorSet,
    gt_boxes: Sequence[Sequence[float]],
    iou_pos: float = 0.5,
    iou_neg: float = 0.4,
) -> DetectionTargets:
    """
    Atribui a cada âncora um status positivo/negativo/ignorar.

    Positiva se max-IoU >= iou_pos ou se for a âncora de maior IoU de alguma
    caixa; negativa se max-IoU < iou_neg; ignorada no intervalo.

    Raises:
        ParameterError: limiares fora de 0 <= iou_neg <= iou_pos <= 1
        DegenerateBoxError: caixa de área nula
    """
    if not 0.0 <= iou_neg <= iou_pos <= 1.0:
        raise ParameterError(f"Limiares inválidos: iou_neg={iou_neg}, iou_pos={iou_pos}")
    n_anchors = len(anchors)
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if len(gt) == 0:
        return DetectionTargets(
            labels=np.zeros(n_anchors, dtype=np.int64),
            regression=np.zeros((n_anchors, 4)),
            matched=np.full(n_anchors, -1, dtype=np.int64),
        )
    degenerate = (gt[:, 2] <= gt[:, 0]) | (gt[:, 3] <= gt[:, 1])
    if degenerate.any():
        raise DegenerateBoxError(f"Caixa degenerada: {gt[degenerate][0].tolist()}")

    iou = box_iou(cxcywh_to_xyxy(anchors.boxes), gt)
    max_iou = iou.max(axis=1)
    matched = iou.argmax(axis=1)

    labels = np.full(n_anchors, IGNORE, dtype=np.int64)
    labels[max_iou < iou_neg] = NEGATIVE
    labels[max_iou >= iou_pos] = POSITIVE
    # garante ao menos uma âncora por caixa
    best_anchor = iou.argmax(axis=0)
    labels[best_anchor] = POSITIVE
    matched[best_anchor] = np.arange(len(gt))

    regression = np.zeros((n_anchors, 4))
    positive = labels == POSITIVE
    regression[positive] = encode_offsets(anchors.boxes[positive], xyxy_to_cxcywh(gt)[matched[positive]])
    matched[~positive] = -1
    return DetectionTargets(labels=labels, regression=regression, matched=matched)


def _focal(log_p: torch.Tensor, log_1mp: torch.Tensor, labels: torch.Tensor, alpha: float, gamma: float) -> torch.Tensor:
    valid = labels != IGNORE
    if not bool(valid.any()):
        return log_p.sum() * 0.0
    positive = labels == POSITIVE
    log_pt = torch.where(positive, log_p, log_1mp)
    alpha_t = torch.where(positive, torch.full_like(log_p, alpha), torch.full_like(log_p, 1.0 - alpha))
    loss = -alpha_t * (1.0 - log_pt.exp()) ** gamma * log_pt
    return loss[valid].mean()


def focal_loss(
    pred_prob: torch.Tensor, labels: torch.Tensor, alpha: float = 0.25, gamma: float = 2.0
) -> torch.Tensor:
    """
    Focal loss média sobre as âncoras não ignoradas: −α_t(1−p_t)^γ log p_t.

    Raises:
        ParameterError: probabilidade fora de (0, 1)
        ShapeError: formatos diferentes
    """
    labels = torch.as_tensor(labels, device=pred_prob.device)
    if pred_prob.shape != labels.shape:
        raise ShapeError(f"pred_prob {tuple(pred_prob.shape)} e alvos {tuple(labels.shape)} diferem")
    valid = labels != IGNORE
    checked = pred_prob[valid]
    if checked.numel() and (bool((checked <= 0).any()) or bool((checked >= 1).any())):
        raise ParameterError("Probabilidades devem estar no intervalo aberto (0, 1)")
    return _focal(torch.log(pred_prob), torch.log1p(-pred_prob), labels, alpha, gamma)


def focal_loss_with_logits(
    logits: torch.Tensor, labels: torch.Tensor, alpha: float = 0.25, gamma: float = 2.0
) -> torch.Tensor:
    """Mesma focal loss calculada a partir de logits (estável quando p satura)"""
    labels = torch.as_tensor(labels, device=logits.device)
    if logits.shape != labels.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} e alvos {tuple(labels.shape)} diferem")
    return _focal(F.logsigmoid(logits), F.logsigmoid(-logits), labels, alpha, gamma)


def box_loss(pred_offsets: torch.Tensor, target_offsets: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """
    Smooth-L1 (beta 1) somado nos 4 offsets e médio sobre as âncoras positivas; 0 sem positivas.

    Raises:
        ShapeError: formatos diferentes
    """
    if pred_offsets.shape != target_offsets.shape or pred_offsets.shape[-1] != 4:
        raise ShapeError(
            f"Offsets previstos {tuple(pred_offsets.shape)} e alvos {tuple(target_offsets.shape)} incompatíveis"
        )
    labels = torch.as_tensor(labels, device=pred_offsets.device)
    positive = labels == POSITIVE
    if not bool(positive.any()):
        return pred_offsets.sum() * 0.0
    loss = F.smooth_l1_loss(pred_offsets[positive], target_offsets[positive], beta=1.0, reduction="none")
    return loss.sum(dim=-1).mean()


def decode_boxes(anchors: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Inverso de encode_offsets: retorna caixas xyxy"""
    cx = offsets[:, 0] * anchors[:, 2] + anchors[:, 0]
    cy = offsets[:, 1] * anchors[:, 3] + anchors[:, 1]
    w = np.exp(offsets[:, 2]) * anchors[:, 2]
    h = np.exp(offsets[:, 3]) * anchors[:, 3]
    return cxcywh_to_xyxy(np.stack([cx, cy, w, h], axis=1))


@dataclass
class Detections:
    boxes: np.ndarray
    scores: np.ndarray

    @property
    def tile_score(self) -> float:
        """Confiança máxima retida (0 quando não há detecções)"""
        return float(self.scores.max()) if len(self.scores) else 0.0


def detect(
    anchors: AnchorSet,
    cls_logits: torch.Tensor,
    box_offsets: torch.Tensor,
    score_threshold: float = 0.5,
    nms_iou: float = 0.5,
) -> Detections:
    """Decodifica as saídas de um tile e aplica NMS"""
    scores = torch.sigmoid(cls_logits.detach()).double().cpu()
    keep = scores >= score_threshold
    if not bool(keep.any()):
        return Detections(boxes=np.zeros((0, 4)), scores=np.zeros(0))
    offsets = box_offsets.detach().double().cpu().numpy()[keep.numpy()]
    boxes = decode_boxes(anchors.boxes[keep.numpy()], offsets)
    kept = nms(torch.from_numpy(boxes), scores[keep], nms_iou).numpy()
    return Detections(boxes=boxes[kept], scores=scores[keep].numpy()[kept])
