"""Deterministic training loop, Adam, and evaluation."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .config import TrainConfig
from .data import SyntheticSample
from .errors import CheckpointError, NumericError, ValidationError
from .metrics import count_params, count_trainable_params, dataset_metrics
from .model import STGDModel
from .tensor import Tensor

logger = logging.getLogger(__name__)


class Adam:
    """Adam with bias correction over a fixed list of tensors."""

    def __init__(self, params: Sequence[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    model: STGDModel
    history: List[Dict] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [h["loss"] for h in self.history if "loss" in h]


def _check_finite(step, **terms):
    for name, value in terms.items():
        if not math.isfinite(value):
            raise NumericError(f"non-finite {name} loss ({value}) at step {step}", op=name)


def train(cfg: TrainConfig, train_set: Sequence[SyntheticSample], val_set: Optional[Sequence[SyntheticSample]] = None,
          use_adapters: Optional[bool] = None, steps: Optional[int] = None,
          callback: Optional[Callable[[Dict], None]] = None) -> TrainResult:
    """Adam over trainable tensors only; minibatches drawn from a seeded epoch permutation.

    Each step's loss is the batch mean of the per-clip total loss. Validation
    metrics are recorded every ``cfg.log_every`` steps and after the last one.
    """
    if not train_set:
        raise ValidationError("training set is empty")
    steps = cfg.steps if steps is None else steps
    model = STGDModel(cfg, use_adapters)
    params = list(model.trainable_parameters().values())
    opt = Adam(params, cfg.lr, (cfg.beta1, cfg.beta2), cfg.adam_eps)
    rng = np.random.default_rng([cfg.seed, 0x7A])
    bs = min(cfg.batch_size, len(train_set))
    order: List[int] = []
    history: List[Dict] = []
    for step in range(1, steps + 1):
        if len(order) < bs:
            order.extend(rng.permutation(len(train_set)).tolist())
        batch, order = order[:bs], order[bs:]
        opt.zero_grad()
        tot = tmp = spa = 0.0
        for i in batch:
            s = train_set[i]
            try:
                loss, lt, ls = model.loss_terms(s.batch, s.tube)
            except NumericError as e:
                raise NumericError(f"step {step}, clip {s.id}: {e}", op=e.op) from e
            _check_finite(step, total=loss.item(), temporal=lt.item(), spatial=ls.item())
            (loss * (1.0 / bs)).backward()
            tot += loss.item()
            tmp += lt.item()
            spa += ls.item()
        opt.step()
        rec = {"step": step, "loss": tot / bs, "temporal": tmp / bs, "spatial": spa / bs}
        if val_set and (step % cfg.log_every == 0 or step == steps):
            rec["val"] = evaluate(model, val_set)
        if step % cfg.log_every == 0 or step == steps:
            logger.info("step %d loss %.5f temporal %.5f spatial %.5f", step, rec["loss"], rec["temporal"],
                        rec["spatial"])
        history.append(rec)
        if callback is not None:
            callback(rec)
    return TrainResult(model, history)


def evaluate(model: STGDModel, dataset: Sequence[SyntheticSample]) -> Dict:
    """Metrics report: m_tiou, m_viou, viou_at_03, viou_at_05, tp_trainable, tp_total, n_samples."""
    pairs = []
    for s in dataset:
        if s.batch.video_features.shape[1:] != (model.cfg.H, model.cfg.W, model.cfg.C):
            raise ValidationError(f"sample {s.id} has frame shape {s.batch.video_features.shape[1:]}, model expects "
                                  f"{(model.cfg.H, model.cfg.W, model.cfg.C)}")
        pairs.append((model.predict(s.batch), s.tube))
    m = dataset_metrics(pairs)
    return {
        "m_tiou": m.m_tiou,
        "m_viou": m.m_viou,
        "viou_at_03": m.viou_at_03,
        "viou_at_05": m.viou_at_05,
        "tp_trainable": count_trainable_params(model),
        "tp_total": count_params(model),
        "n_samples": m.n_samples,
    }


def save_model(model: STGDModel, path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    meta = dict(meta or {})
    meta["use_adapters"] = model.use_adapters
    return save_checkpoint(path, model.state_arrays(), model.cfg.to_dict(), meta)


def load_model(path: Union[str, Path]) -> STGDModel:
    arrays, manifest = load_checkpoint(path)
    try:
        cfg = TrainConfig.from_dict(manifest["config"])
    except Exception as e:
        raise CheckpointError(f"{path}: embedded config is invalid ({e})") from e
    model = STGDModel(cfg, manifest.get("meta", {}).get("use_adapters", cfg.use_adapters))
    load_into(model, arrays)
    return model


def evaluate_checkpoint(path: Union[str, Path], dataset: Sequence[SyntheticSample]) -> Dict:
    return evaluate(load_model(path), dataset)


def check_model_gradients(cfg: TrainConfig, tol: float = 1e-4, h: float = 1e-5, n_coords: int = 20,
                          perturb: float = 0.05, seed: Optional[int] = None):
    """Finite-difference check of the full clip loss against every trainable tensor.

    Trainable tensors are first jittered by ``perturb`` so zero-initialised
    adapter weights do not hide broken gradient paths.
    """
    from .data import generate_dataset
    from .gradcheck import grad_check

    seed = cfg.seed if seed is None else seed
    model = STGDModel(cfg)
    params = model.trainable_parameters()
    rng = np.random.default_rng([seed, 0x6C])
    for t in params.values():
        t.data = t.data + perturb * rng.standard_normal(t.shape)
    sample = generate_dataset(cfg, 1, seed)[0]
    return grad_check(lambda: model.loss(sample.batch, sample.tube), params, h=h, tol=tol, n_coords=n_coords,
                      seed=seed)
