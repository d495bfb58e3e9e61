"""Central finite-difference verification of reverse-mode gradients."""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np

from .tensor import Tensor, detect_anomaly, no_grad


@dataclass
class CoordCheck:
    param: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    passed: bool
    checks: List[CoordCheck] = field(default_factory=list)

    @property
    def n_checked(self) -> int:
        return len(self.checks)

    def per_param(self) -> Dict[str, float]:
        worst: Dict[str, float] = {}
        for c in self.checks:
            worst[c.param] = max(worst.get(c.param, 0.0), c.rel_error)
        return worst

    def worst(self) -> CoordCheck:
        return max(self.checks, key=lambda c: c.rel_error)


def relative_error(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(
    f: Callable[[], Tensor],
    params: Union[Mapping[str, Tensor], Iterable[Tensor]],
    h: float = 1e-5,
    tol: float = 1e-4,
    n_coords: int = 20,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare backprop gradients of a scalar ``f()`` with central differences.

    For each parameter, ``n_coords`` coordinates are sampled without replacement
    (all of them when the tensor is smaller). The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps coordinates whose true
    gradient is ~0 from dividing round-off by round-off. With ``h=1e-5`` and a loss
    of order one, a central difference resolves about ``ulp(f) / 2h ~ 5e-11``, so
    the default floor of 1e-6 accepts absolute mismatches up to ``floor * tol``.

    Raises :class:`NumericError` if any op yields a non-finite value.
    """
    if isinstance(params, Mapping):
        named = list(params.items())
    else:
        named = [(p.name or f"param{i}", p) for i, p in enumerate(params)]
    rng = np.random.default_rng(seed)

    for _, p in named:
        p.grad = None
    with detect_anomaly():
        out = f()
        if out.size != 1:
            raise ValueError(f"grad_check needs a scalar function, got shape {out.shape}")
        out.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in named}

    def evaluate():
        with no_grad(), detect_anomaly():
            return f().item()

    checks = []
    for name, p in named:
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        n = min(n_coords, flat.size)
        coords = np.sort(rng.choice(flat.size, size=n, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp = evaluate()
            flat[c] = orig - h
            fm = evaluate()
            flat[c] = orig
            num = (fp - fm) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[c])
            idx = tuple(int(i) for i in np.unravel_index(c, p.shape))
            checks.append(CoordCheck(name, idx, a, num, relative_error(a, num, floor)))
    worst = max((c.rel_error for c in checks), default=0.0)
    return GradCheckReport(worst, tol, worst < tol, checks)
