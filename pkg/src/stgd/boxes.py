"""Box conversions, IoU and generalised IoU (plain and differentiable)."""

import numpy as np

from . import tensor as tn
from .errors import ValidationError
from .tensor import Tensor


def cxcywh_to_xyxy(b):
    b = np.asarray(b, dtype=np.float64)
    half = b[..., 2:] / 2
    return np.concatenate([b[..., :2] - half, b[..., :2] + half], axis=-1)


def _area(b):
    return (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])


def box_iou(a, b) -> float:
    """IoU of two corner-form boxes ``(x1, y1, x2, y2)``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = _area(a) + _area(b) - inter
    return float(inter / union) if union > 0 else 0.0


def giou(a, b) -> float:
    """Generalised IoU of two corner-form boxes; lies in (-1, 1]."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    for box in (a, b):
        if not (box[2] > box[0] and box[3] > box[1]):
            raise ValidationError(f"box {box.tolist()} has zero or negative area")
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = _area(a) + _area(b) - inter
    hull = (max(a[2], b[2]) - min(a[0], b[0])) * (max(a[3], b[3]) - min(a[1], b[1]))
    return float(inter / union - (hull - union) / hull)


def giou_tensor(pred: Tensor, target: np.ndarray) -> Tensor:
    """Per-row GIoU between predicted cx,cy,w,h boxes ``(n, 4)`` and fixed targets."""
    target = np.asarray(target, dtype=np.float64)
    if np.any(target[:, 2:] <= 0):
        raise ValidationError("target boxes need positive width and height")
    g = cxcywh_to_xyxy(target)
    cx, cy, w, h = (pred[:, i] for i in range(4))
    px1, px2 = cx - w * 0.5, cx + w * 0.5
    py1, py2 = cy - h * 0.5, cy + h * 0.5
    gx1, gy1, gx2, gy2 = (Tensor(g[:, i]) for i in range(4))
    iw = tn.clamp_min(tn.minimum(px2, gx2) - tn.maximum(px1, gx1), 0.0)
    ih = tn.clamp_min(tn.minimum(py2, gy2) - tn.maximum(py1, gy1), 0.0)
    inter = iw * ih
    union = w * h + Tensor(_area(g)) - inter
    hull = ((tn.maximum(px2, gx2) - tn.minimum(px1, gx1))
            * (tn.maximum(py2, gy2) - tn.minimum(py1, gy1)))
    return inter / union - (hull - union) / hull
