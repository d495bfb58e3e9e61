"""Spatio-temporal tubes: an inclusive frame interval plus one box per frame in it."""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _check(t_s, t_e, boxes, T=None):
    if not 0 <= t_s <= t_e:
        raise ValidationError(f"invalid segment [{t_s}, {t_e}]")
    if T is not None and t_e >= T:
        raise ValidationError(f"segment [{t_s}, {t_e}] exceeds clip length {T}")
    if boxes.shape != (t_e - t_s + 1, 4):
        raise ValidationError(f"expected {t_e - t_s + 1} boxes of (cx, cy, w, h), got {boxes.shape}")


@dataclass
class GroundTruthTube:
    t_s: int
    t_e: int
    boxes: np.ndarray  # (t_e - t_s + 1, 4) normalised cx, cy, w, h

    def __post_init__(self):
        self.t_s, self.t_e = int(self.t_s), int(self.t_e)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        _check(self.t_s, self.t_e, self.boxes)
        if np.any(self.boxes[:, 2:] <= 0):
            raise ValidationError("ground-truth boxes need positive width and height")

    @property
    def frames(self) -> range:
        return range(self.t_s, self.t_e + 1)

    def box_at(self, t: int) -> np.ndarray:
        return self.boxes[t - self.t_s]

    def mask(self, T: int) -> np.ndarray:
        m = np.zeros(T)
        m[self.t_s:self.t_e + 1] = 1.0
        return m


@dataclass
class PredictedTube:
    t_s: int
    t_e: int
    boxes: np.ndarray

    def __post_init__(self):
        self.t_s, self.t_e = int(self.t_s), int(self.t_e)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        _check(self.t_s, self.t_e, self.boxes)

    @property
    def frames(self) -> range:
        return range(self.t_s, self.t_e + 1)

    def box_at(self, t: int) -> np.ndarray:
        return self.boxes[t - self.t_s]

    @classmethod
    def from_gt(cls, gt: GroundTruthTube) -> "PredictedTube":
        return cls(gt.t_s, gt.t_e, gt.boxes.copy())
