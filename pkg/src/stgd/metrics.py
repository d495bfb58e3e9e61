"""Grounding metrics (tIoU, vIoU, vIoU@R) and trainable-parameter accounting."""

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence, Tuple

import numpy as np

from .boxes import box_iou, cxcywh_to_xyxy
from .errors import ValidationError
from .tensor import Tensor
from .tubes import GroundTruthTube, PredictedTube


def _interval(x):
    s, e = (x.t_s, x.t_e) if hasattr(x, "t_s") else x
    if s > e:
        raise ValidationError(f"inverted interval [{s}, {e}]")
    return int(s), int(e)


def t_iou(pred, gt) -> float:
    """IoU of two inclusive frame intervals ``(s, e)``."""
    ps, pe = _interval(pred)
    gs, ge = _interval(gt)
    inter = max(0, min(pe, ge) - max(ps, gs) + 1)
    union = (pe - ps + 1) + (ge - gs + 1) - inter
    return inter / union


def v_iou(pred: PredictedTube, gt: GroundTruthTube) -> float:
    """Box IoU summed over shared frames, divided by the number of frames in either tube."""
    ps, pe = _interval(pred)
    gs, ge = _interval(gt)
    lo, hi = max(ps, gs), min(pe, ge)
    inter = max(0, hi - lo + 1)
    union = (pe - ps + 1) + (ge - gs + 1) - inter
    total = math.fsum(
        box_iou(cxcywh_to_xyxy(pred.box_at(t)), cxcywh_to_xyxy(gt.box_at(t))) for t in range(lo, hi + 1)
    )
    return total / union


@dataclass(frozen=True)
class GroundingMetrics:
    m_tiou: float
    m_viou: float
    viou_at_03: float
    viou_at_05: float
    n_samples: int

    def as_dict(self):
        return asdict(self)


def dataset_metrics(pairs: Iterable[Tuple[PredictedTube, GroundTruthTube]]) -> GroundingMetrics:
    """Mean tIoU / vIoU and the fraction of samples with vIoU strictly above 0.3 and 0.5."""
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("dataset_metrics needs at least one (prediction, ground truth) pair")
    tious = [t_iou(p, g) for p, g in pairs]
    vious = [v_iou(p, g) for p, g in pairs]
    n = len(pairs)
    return GroundingMetrics(
        m_tiou=math.fsum(tious) / n,
        m_viou=math.fsum(vious) / n,
        viou_at_03=sum(v > 0.3 for v in vious) / n,
        viou_at_05=sum(v > 0.5 for v in vious) / n,
        n_samples=n,
    )


def _tensors(model):
    if hasattr(model, "named_parameters"):
        return list(model.named_parameters().values())
    if isinstance(model, Mapping):
        return list(model.values())
    return list(model)


def count_trainable_params(model) -> int:
    """Number of scalars in tensors flagged ``requires_grad``.

    ``model`` may expose ``named_parameters()`` or be a mapping / iterable of tensors.
    """
    return int(sum(t.size for t in _tensors(model) if t.requires_grad))


def count_params(model) -> int:
    return int(sum(t.size for t in _tensors(model)))
