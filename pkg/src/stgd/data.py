"""
Synthetic grounding clips.

A fixed "world" (drawn from ``cfg.seed``) holds one visual pattern vector and one
word embedding per object id, plus filler words. Each clip:

* background: Gaussian noise over ``(T, H, W, C)``;
* target: its pattern is added to every pixel inside a box that moves linearly
  across the ground-truth segment ``[t_s, t_e]`` and is absent elsewhere;
* distractor: a different object's pattern inside its own moving box on every frame;
* text: filler words with the target's word at one random position, plus noise.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from .backbone import FrameBatch
from .errors import ConfigurationError, ValidationError
from .metrics import t_iou
from .tubes import GroundTruthTube


@dataclass
class SyntheticSample:
    id: int
    batch: FrameBatch
    tube: GroundTruthTube
    seed: int
    target: int = -1


@dataclass
class World:
    patterns: np.ndarray      # (n_patterns, C), orthogonal when n_patterns <= C, norm = signal_amplitude
    words: np.ndarray         # (n_patterns, d_text)
    fillers: np.ndarray       # (n_fillers, d_text)


def make_world(cfg) -> World:
    rng = np.random.default_rng([cfg.seed, 0x3D])
    if cfg.n_patterns <= cfg.C:
        q, _ = np.linalg.qr(rng.normal(size=(cfg.C, cfg.n_patterns)))
        pats = q.T.copy()
    else:
        pats = rng.normal(size=(cfg.n_patterns, cfg.C))
    pats *= cfg.signal_amplitude / np.linalg.norm(pats, axis=1, keepdims=True)
    words = rng.normal(size=(cfg.n_patterns, cfg.d_text))
    fillers = rng.normal(size=(cfg.n_fillers, cfg.d_text))
    return World(pats, words, fillers)


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _box_track(rng, t0, t1, T):
    w, h = rng.uniform(0.3, 0.55, size=2)
    start = rng.uniform([w / 2, h / 2], [1 - w / 2, 1 - h / 2])
    end = rng.uniform([w / 2, h / 2], [1 - w / 2, 1 - h / 2])
    span = max(t1 - t0, 1)
    out = np.zeros((T, 4))
    for t in range(T):
        a = np.clip((t - t0) / span, 0.0, 1.0)
        out[t, :2] = (1 - a) * start + a * end
        out[t, 2:] = (w, h)
    return out


def box_mask(box, H: int, W: int) -> np.ndarray:
    """Pixels whose centres fall inside a normalised (cx, cy, w, h) box."""
    cx, cy, w, h = box
    xs = (np.arange(W) + 0.5) / W
    ys = (np.arange(H) + 0.5) / H
    inx = (xs >= cx - w / 2) & (xs <= cx + w / 2)
    iny = (ys >= cy - h / 2) & (ys <= cy + h / 2)
    return iny[:, None] & inx[None, :]


def generate_sample(cfg, seed: int, index: int = 0, world: World = None) -> SyntheticSample:
    world = make_world(cfg) if world is None else world
    rng = np.random.default_rng(seed)
    T, H, W = cfg.T, cfg.H, cfg.W
    target, distractor = rng.choice(cfg.n_patterns, size=2, replace=False)
    length = int(rng.integers(2, T)) if T > 2 else 1
    t_s = int(rng.integers(0, T - length + 1))
    t_e = t_s + length - 1

    video = rng.normal(0.0, cfg.noise_std, size=(T, H, W, cfg.C))
    track = _box_track(rng, t_s, t_e, T)
    for t in range(t_s, t_e + 1):
        video[t, box_mask(track[t], H, W)] += world.patterns[target]
    other = _box_track(rng, 0, T - 1, T)
    for t in range(T):
        video[t, box_mask(other[t], H, W)] += world.patterns[distractor]

    text = world.fillers[rng.integers(0, cfg.n_fillers, size=cfg.L)]
    text[rng.integers(0, cfg.L)] = world.words[target]
    text = text + rng.normal(0.0, cfg.text_noise, size=text.shape)

    tube = GroundTruthTube(t_s, t_e, track[t_s:t_e + 1])
    return SyntheticSample(index, FrameBatch(video, text), tube, seed, int(target))


def generate_dataset(cfg, n_samples: int, seed: int) -> List[SyntheticSample]:
    """``n_samples`` clips, fully determined by ``(cfg, seed)``."""
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    if cfg.T < 2:
        raise ConfigurationError(f"T must be >= 2, got {cfg.T}")
    world = make_world(cfg)
    return [generate_sample(cfg, sample_seed(seed, i), i, world) for i in range(n_samples)]


def matched_filter_segment(cfg, sample: SyntheticSample, world: World = None):
    """Locate the target by correlating every pixel with its known pattern.

    A frame counts as active when the mean of its two strongest pixel responses
    exceeds 0.7 of the pattern energy. Returns ``(s, e)`` or None.
    """
    world = make_world(cfg) if world is None else world
    pat = world.patterns[sample.target]
    resp = sample.batch.video_features @ pat              # (T, H, W)
    top = np.sort(resp.reshape(resp.shape[0], -1), axis=1)[:, -2:].mean(axis=1)
    active = np.flatnonzero(top > 0.7 * pat @ pat)
    if active.size == 0:
        return None
    return int(active[0]), int(active[-1])


def matched_filter_tiou(cfg, sample: SyntheticSample, world: World = None) -> float:
    seg = matched_filter_segment(cfg, sample, world)
    return 0.0 if seg is None else t_iou(seg, sample.tube)


# -- JSONL ----------------------------------------------------------------

def sample_to_record(s: SyntheticSample) -> dict:
    v, txt = s.batch.video_features, s.batch.text_tokens
    T, H, W, C = v.shape
    return {
        "id": s.id, "seed": s.seed, "T": T, "H": H, "W": W, "C": C, "L": txt.shape[0],
        "video_features": v.reshape(-1).tolist(),
        "text_tokens": txt.reshape(-1).tolist(),
        "t_s": s.tube.t_s, "t_e": s.tube.t_e,
        "boxes": s.tube.boxes.tolist(),
        "target": s.target,
    }


_REQUIRED = ("id", "seed", "T", "H", "W", "C", "L", "video_features", "text_tokens", "t_s", "t_e", "boxes")


def record_to_sample(rec: dict) -> SyntheticSample:
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise ValidationError(f"dataset record missing fields: {', '.join(missing)}")
    T, H, W, C, L = (int(rec[k]) for k in ("T", "H", "W", "C", "L"))
    video = np.asarray(rec["video_features"], dtype=np.float64)
    if video.size != T * H * W * C:
        raise ValidationError(f"record {rec['id']}: video_features has {video.size} values, expected {T * H * W * C}")
    text = np.asarray(rec["text_tokens"], dtype=np.float64)
    if text.size % L:
        raise ValidationError(f"record {rec['id']}: {text.size} text values do not split into {L} tokens")
    batch = FrameBatch(video.reshape(T, H, W, C), text.reshape(L, -1))
    tube = GroundTruthTube(rec["t_s"], rec["t_e"], rec["boxes"])
    if tube.t_e >= T:
        raise ValidationError(f"record {rec['id']}: segment ends past frame {T - 1}")
    return SyntheticSample(int(rec["id"]), batch, tube, int(rec["seed"]), int(rec.get("target", -1)))


def write_jsonl(samples: Iterable[SyntheticSample], path: Union[str, Path]):
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_record(s)) + "\n")


def read_jsonl(path: Union[str, Path]) -> List[SyntheticSample]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{n}: invalid JSON ({e})") from e
            out.append(record_to_sample(rec))
    if not out:
        raise ValidationError(f"{path}: no samples")
    return out
