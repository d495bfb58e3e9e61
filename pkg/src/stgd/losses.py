"""
Training objectives for grounding.

Temporal term per text query::

    lambda_s * KL(start_target || start_dist) + lambda_e * KL(end_target || end_dist)
        + lambda_t * BCE(segment_mask, temporal_conf)

Spatial term, averaged over ground-truth frames only::

    lambda_box * smoothL1(box, gt) + lambda_giou * (1 - GIoU(box, gt))

The total is the sum of both terms over text queries.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from . import tensor as tn
from .boxes import giou_tensor
from .errors import NumericError, ValidationError
from .tensor import Tensor
from .tubes import GroundTruthTube


@dataclass(frozen=True)
class LossWeights:
    lambda_s: float = 1.0
    lambda_e: float = 1.0
    lambda_t: float = 1.0
    lambda_box: float = 5.0
    lambda_giou: float = 2.0

    def __post_init__(self):
        for name, v in vars(self).items():
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"loss weight {name} must be finite and >= 0, got {v}")


def _check_distribution(name, p, tol=1e-6):
    if not np.all(np.isfinite(p)):
        raise NumericError(f"{name} distribution has non-finite entries", op="kl_div")
    if np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise ValidationError(f"{name} is not a probability vector (sum={p.sum():.8g}, min={p.min():.3g})")


def kl_div(target, pred, eps: float = 1e-12) -> Tensor:
    """``sum_i target_i * ln((target_i + eps) / (pred_i + eps))``; gradient flows into ``pred``."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    if target.shape != pred.shape:
        raise ValidationError(f"target {target.shape} and prediction {pred.shape} differ in shape")
    _check_distribution("target", target)
    _check_distribution("prediction", pred.data)
    const = float(np.sum(target * np.log(target + eps)))
    cross = tn.sum(tn.mul(Tensor(target), tn.log(tn.shift(pred, eps))))
    return tn.shift(tn.neg(cross), const)


def bce_mask(target_mask, conf, eps: float = 1e-12) -> Tensor:
    """Mean binary cross-entropy of per-frame confidences against a 0/1 mask.

    Confidences are clipped to ``[eps, 1 - eps]`` so a saturated sigmoid gives a
    large finite loss instead of ``inf``; clipped entries pass no gradient.
    """
    y = np.asarray(target_mask, dtype=np.float64)
    conf = conf if isinstance(conf, Tensor) else Tensor(conf)
    if y.shape != conf.shape:
        raise ValidationError(f"mask {y.shape} and confidences {conf.shape} differ in shape")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("target mask must be 0/1")
    p = conf.data
    if not np.all(np.isfinite(p)):
        raise NumericError("non-finite confidence", op="bce_mask")
    if not np.all((p >= 0) & (p <= 1)):
        raise ValidationError("confidences must lie in [0, 1]")
    conf = tn.minimum(tn.clamp_min(conf, eps), Tensor(np.full(conf.shape, 1.0 - eps)))
    pos = tn.mul(Tensor(y), tn.log(conf))
    negv = tn.mul(Tensor(1.0 - y), tn.log(tn.shift(tn.neg(conf), 1.0)))
    return tn.neg(tn.mean(tn.add(pos, negv)))


def gt_boundary_distribution(t_star: int, T: int, sigma: float = 1.0) -> np.ndarray:
    """Discrete Gaussian over frames ``0..T-1`` centred on ``t_star``, renormalised."""
    if not 0 <= t_star < T:
        raise ValidationError(f"boundary frame {t_star} outside [0, {T})")
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    i = np.arange(T, dtype=np.float64)
    w = np.exp(-((i - t_star) ** 2) / (2.0 * sigma * sigma))
    return w / w.sum()


def temporal_loss(pred, gt: GroundTruthTube, w: LossWeights = LossWeights(), sigma: float = 1.0) -> Tensor:
    """Boundary KL terms plus in-segment confidence BCE for one text query."""
    T = pred.start_dist.shape[0]
    if pred.end_dist.shape != (T,) or pred.temporal_conf.shape != (T,):
        raise ValidationError("start/end/confidence predictions must share one length")
    if gt.t_e >= T:
        raise ValidationError(f"ground-truth segment [{gt.t_s}, {gt.t_e}] exceeds {T} frames")
    ks = kl_div(gt_boundary_distribution(gt.t_s, T, sigma), pred.start_dist)
    ke = kl_div(gt_boundary_distribution(gt.t_e, T, sigma), pred.end_dist)
    bce = bce_mask(gt.mask(T), pred.temporal_conf)
    return tn.add(tn.add(tn.scale(ks, w.lambda_s), tn.scale(ke, w.lambda_e)), tn.scale(bce, w.lambda_t))


def spatial_loss(pred_boxes: Tensor, gt: GroundTruthTube, w: LossWeights = LossWeights()) -> Tensor:
    """Box regression on the frames of the ground-truth segment; the rest is ignored.

    Smooth L1 is summed over the four box coordinates of a frame.
    """
    if pred_boxes.ndim != 2 or pred_boxes.shape[1] != 4:
        raise ValidationError(f"expected (T, 4) boxes, got {pred_boxes.shape}")
    if gt.t_e >= pred_boxes.shape[0]:
        raise ValidationError(f"ground-truth segment [{gt.t_s}, {gt.t_e}] exceeds {pred_boxes.shape[0]} frames")
    sel = pred_boxes[gt.t_s:gt.t_e + 1]
    l1 = tn.sum(tn.smooth_l1(tn.sub(sel, Tensor(gt.boxes))), axis=1)
    g = giou_tensor(sel, gt.boxes)
    per_frame = tn.add(tn.scale(l1, w.lambda_box), tn.scale(tn.shift(tn.neg(g), 1.0), w.lambda_giou))
    return tn.mean(per_frame)


def total_loss(per_query: Iterable[Tuple[Tensor, Tensor]]) -> Tensor:
    """Sum of temporal + spatial terms over text queries."""
    terms = [tn.add(lt, ls) for lt, ls in per_query]
    if not terms:
        raise ValidationError("total_loss needs at least one query")
    out = terms[0]
    for t in terms[1:]:
        out = tn.add(out, t)
    return out
