"""
Bottleneck adapters and low-rank text adaptation.

Three adapter kinds share one parameter layout (up-projection, a convolutional
branch, zero-initialised down-projection):

* ``"temporal"``      -- ``Z + Conv1d(Z W_up) W_down`` along the time axis
* ``"temporal_diff"`` -- same, applied to forward frame differences of the input
* ``"st"``            -- parallel per-frame 3x3 conv2d and pooled conv1d branches

Because ``W_down`` and its bias start at zero every fresh adapter is an exact
identity map.
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import tensor as tn
from .errors import ConfigurationError, ShapeError
from .tensor import Tensor

KINDS = ("temporal", "temporal_diff", "st")


@dataclass
class AdapterParams:
    kind: str
    w_up: Tensor
    b_up: Tensor
    conv1d_w: Tensor
    conv1d_b: Tensor
    w_down: Tensor
    b_down: Tensor
    conv2d_w: Optional[Tensor] = None
    conv2d_b: Optional[Tensor] = None

    @property
    def dim(self) -> int:
        return self.w_up.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_up.shape[1]

    @property
    def ratio(self) -> int:
        return self.dim // self.hidden

    def tensors(self) -> Dict[str, Tensor]:
        names = ["w_up", "b_up", "conv1d_w", "conv1d_b", "conv2d_w", "conv2d_b", "w_down", "b_down"]
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def num_params(self) -> int:
        return int(np.sum([t.size for t in self.tensors().values()]))


@dataclass
class LoRAParams:
    a: Tensor
    b: Tensor
    alpha: float = 8.0

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def tensors(self) -> Dict[str, Tensor]:
        return {"a": self.a, "b": self.b}


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def adapter_param_count(kind: str, dim: int, ratio: int = 4, kernel: int = 3) -> int:
    """Closed-form parameter count of :func:`init_adapter`'s output."""
    h = dim // ratio
    n = (dim * h + h) + (h * h * kernel + h) + (h * dim + dim)
    if kind == "st":
        n += h * h * kernel * kernel + h
    return n


def init_adapter(kind: str, dim: int, ratio: int = 4, seed: int = 0, kernel: int = 3) -> AdapterParams:
    """Seeded adapter initialisation.

    ``W_up`` and the convolution kernels are uniform in ``+-1/sqrt(fan_in)``; the
    up/conv biases, ``W_down`` and ``b_down`` are zero.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown adapter kind {kind!r}; expected one of {KINDS}")
    if not isinstance(ratio, (int, np.integer)) or ratio < 1 or dim % ratio != 0:
        raise ConfigurationError(f"bottleneck ratio {ratio} must be a positive divisor of dim {dim}")
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigurationError(f"kernel size must be odd, got {kernel}")
    h = dim // ratio
    rng = np.random.default_rng(seed)
    w_up = _uniform(rng, (dim, h), dim)
    conv1d_w = _uniform(rng, (h, h, kernel), h * kernel)
    conv2d_w = _uniform(rng, (h, h, kernel, kernel), h * kernel * kernel) if kind == "st" else None
    return AdapterParams(
        kind=kind,
        w_up=w_up,
        b_up=_zeros(h),
        conv1d_w=conv1d_w,
        conv1d_b=_zeros(h),
        w_down=_zeros((h, dim)),
        b_down=_zeros(dim),
        conv2d_w=conv2d_w,
        conv2d_b=_zeros(h) if kind == "st" else None,
    )


def init_lora(d_in: int, d_out: int, rank: int = 4, alpha: float = 8.0, seed: int = 0) -> LoRAParams:
    if rank < 1 or rank >= min(d_in, d_out):
        raise ConfigurationError(f"LoRA rank {rank} must lie in [1, {min(d_in, d_out)})")
    rng = np.random.default_rng(seed)
    return LoRAParams(a=_uniform(rng, (d_in, rank), d_in), b=_zeros((rank, d_out)), alpha=alpha)


def _check_dim(x: Tensor, p: AdapterParams):
    if x.shape[-1] != p.dim:
        raise ShapeError(f"{p.kind} adapter expects feature dim {p.dim}, got input {x.shape}")


def temporal_diff_operator(q: Tensor) -> Tensor:
    """Forward difference along axis 0 with a zero row appended at the last step."""
    zero = Tensor(np.zeros((1,) + q.shape[1:]))
    if q.shape[0] == 1:
        return tn.mul(q, Tensor(np.zeros(q.shape)))
    return tn.concat([tn.sub(q[1:], q[:-1]), zero], axis=0)


def _branch_1d(x: Tensor, p: AdapterParams) -> Tensor:
    up = tn.linear(x, p.w_up, p.b_up)
    return tn.linear(tn.conv1d(up, p.conv1d_w, p.conv1d_b), p.w_down, p.b_down)


def temporal_adapter(z: Tensor, p: AdapterParams) -> Tensor:
    """Residual temporal adapter on ``z`` of shape ``(T, ..., D)``.

    Middle axes (token positions, query slots) are processed independently.
    """
    _check_dim(z, p)
    return tn.add(z, _branch_1d(z, p))


def temporal_diff_adapter(q: Tensor, p: AdapterParams) -> Tensor:
    _check_dim(q, p)
    return tn.add(q, _branch_1d(temporal_diff_operator(q), p))


def st_adapter(z: Tensor, p: AdapterParams) -> Tensor:
    """Spatio-temporal adapter on a ``(T, H, W, C)`` feature map.

    The up-projected map feeds a per-frame conv2d and, after spatial mean
    pooling, a conv1d over time; the temporal result is broadcast back over
    ``H x W`` and added to the spatial one before down-projection.
    """
    _check_dim(z, p)
    if z.ndim != 4:
        raise ShapeError(f"st adapter expects (T, H, W, C), got {z.shape}")
    if p.conv2d_w is None:
        raise ConfigurationError(f"adapter of kind {p.kind!r} has no spatial branch")
    T, H, W, _ = z.shape
    h = p.hidden
    up = tn.linear(z, p.w_up, p.b_up)
    spatial = tn.conv2d(up, p.conv2d_w, p.conv2d_b)
    pooled = tn.mean(up, axis=(1, 2))
    temporal = tn.conv1d(pooled, p.conv1d_w, p.conv1d_b)
    temporal = tn.expand(tn.reshape(temporal, (T, 1, 1, h)), (T, H, W, h))
    fused = tn.add(spatial, temporal)
    return tn.add(z, tn.linear(fused, p.w_down, p.b_down))


def apply_adapter(x: Tensor, p: AdapterParams) -> Tensor:
    if p.kind == "temporal":
        return temporal_adapter(x, p)
    if p.kind == "temporal_diff":
        return temporal_diff_adapter(x, p)
    return st_adapter(x, p)


def lora_linear(x: Tensor, w_frozen: Tensor, q: Optional[LoRAParams] = None) -> Tensor:
    """``x W + (alpha / r) (x A) B``; the frozen term alone when ``q`` is None."""
    base = tn.linear(x, w_frozen)
    if q is None:
        return base
    if q.a.shape[0] != w_frozen.shape[0] or q.b.shape[1] != w_frozen.shape[1] or q.a.shape[1] != q.b.shape[0]:
        raise ShapeError(
            f"LoRA factors {q.a.shape} x {q.b.shape} do not fit frozen weight {w_frozen.shape}"
        )
    update = tn.linear(tn.linear(x, q.a), q.b)
    return tn.add(base, tn.scale(update, q.scaling))
