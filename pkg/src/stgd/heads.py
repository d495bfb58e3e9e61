"""
Query-guided refinement, temporal decoder and prediction heads.

Given decoded queries ``V`` (``T x N_q x d``) and a sentence vector ``c``:

1. score each query by cosine similarity to ``c``;
2. keep the top-K per frame and pool them with softmax(score) weights;
3. concatenate with the frame's mean encoder memory and project back to ``d``;
4. run relative-position self-attention over frames;
5. read out start/end distributions, per-frame confidence and one box per frame.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import layers
from . import tensor as tn
from .errors import ConfigurationError, DegenerateInputError, ShapeError
from .tensor import Tensor
from .tubes import PredictedTube


@dataclass
class BoundaryPrediction:
    start_dist: Tensor
    end_dist: Tensor
    temporal_conf: Tensor
    boxes: Optional[Tensor] = None
    query_conf: Optional[np.ndarray] = None  # per-frame max relevance, reported but never optimised


def init_heads(cfg, seed: Optional[int] = None) -> layers.Params:
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed, 0x4EAD])
    d = cfg.d
    p: layers.Params = {}
    layers.init_linear(p, "fuse", 2 * d, d, rng, True)
    for i in range(cfg.temporal_layers):
        name = f"tdec{i + 1}"
        layers.init_mha(p, f"{name}.attn", d, rng, True)
        p[f"{name}.rel_bias"] = Tensor(np.zeros((2 * cfg.rel_pos_clip + 1, cfg.n_heads)), requires_grad=True)
        layers.init_layer_norm(p, f"{name}.ln1", d, True)
        layers.init_ffn(p, f"{name}.ffn", d, d * cfg.temporal_ffn_mult, rng, True)
        layers.init_layer_norm(p, f"{name}.ln2", d, True)
    for head in ("start", "end", "conf"):
        layers.init_linear(p, head, d, 1, rng, True)
    layers.init_linear(p, "box.fc1", d, d, rng, True)
    layers.init_linear(p, "box.fc2", d, 4, rng, True)
    return p


def relevance_scores(V: Tensor, c: Tensor) -> Tensor:
    """Cosine similarity of every query ``V[t, j]`` to ``c``; shape ``(T, N_q)``."""
    if not np.any(c.data):
        raise DegenerateInputError("text query vector has zero norm")
    return tn.cosine_similarity(V, c)


def top_k_select(scores, K: int) -> np.ndarray:
    """Per-frame indices of the K best scores, best first, ties to the lower index."""
    s = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    if not 1 <= K <= s.shape[1]:
        raise ConfigurationError(f"K={K} outside [1, {s.shape[1]}]")
    return np.argsort(-s, axis=1, kind="stable")[:, :K]


def aggregate_queries(V: Tensor, scores: Tensor, indices) -> Tensor:
    """Softmax-weighted sum of the selected queries per frame -> ``(T, d)``."""
    T, _, d = V.shape
    indices = np.asarray(indices)
    K = indices.shape[1]
    alpha = tn.softmax(tn.gather_rows(scores, indices), axis=-1)
    picked = tn.gather_rows(V, indices)
    return tn.reshape(tn.matmul(tn.reshape(alpha, (T, 1, K)), picked), (T, d))


def fuse_global_local(f_agg: Tensor, mem_vision: Tensor, p: layers.Params) -> Tensor:
    if f_agg.shape[0] != mem_vision.shape[0] or f_agg.shape[1] != mem_vision.shape[2]:
        raise ShapeError(f"local features {f_agg.shape} do not match memory {mem_vision.shape}")
    f_global = tn.mean(mem_vision, axis=1)
    return layers.dense(p, "fuse", tn.concat([f_agg, f_global], axis=-1))


def relative_position_index(positions, clip: int) -> np.ndarray:
    """Table rows for every frame pair: ``clip(t_i - t_j, -clip, clip) + clip``."""
    pos = np.asarray(positions)
    return np.clip(pos[:, None] - pos[None, :], -clip, clip) + clip


def relative_position_bias(table: Tensor, positions) -> Tensor:
    """Attention-logit bias ``(1, heads, T, T)`` looked up from a ``(2*clip+1, heads)`` table."""
    clip = (table.shape[0] - 1) // 2
    idx = relative_position_index(positions, clip)
    T = idx.shape[0]
    b = tn.transpose(tn.take(table, idx), (2, 0, 1))
    return tn.reshape(b, (1, table.shape[1], T, T))


def temporal_decode(f_fused: Tensor, p: layers.Params, n_heads: int, n_layers: Optional[int] = None,
                    return_attention: bool = False):
    """Post-norm self-attention blocks over frames with a learned relative-position bias."""
    T, d = f_fused.shape
    if n_layers is None:
        n_layers = sum(1 for k in p if k.endswith(".rel_bias"))
    positions = np.arange(T)
    x = tn.reshape(f_fused, (1, T, d))
    maps = []
    for i in range(n_layers):
        name = f"tdec{i + 1}"
        bias = relative_position_bias(p[f"{name}.rel_bias"], positions)
        a, w = layers.mha(p, f"{name}.attn", x, x, n_heads, bias=bias, return_weights=True)
        maps.append(w.data[0])
        x = layers.norm(p, f"{name}.ln1", tn.add(x, a))
        x = layers.norm(p, f"{name}.ln2", tn.add(x, layers.ffn(p, f"{name}.ffn", x)))
    out = tn.reshape(x, (T, d))
    return (out, maps) if return_attention else out


def predict_boundaries(h: Tensor, p: layers.Params) -> BoundaryPrediction:
    T = h.shape[0]

    def logits(name):
        return tn.reshape(layers.dense(p, name, h), (T,))

    return BoundaryPrediction(
        start_dist=tn.softmax(logits("start")),
        end_dist=tn.softmax(logits("end")),
        temporal_conf=tn.sigmoid(logits("conf")),
    )


def best_query(scores) -> np.ndarray:
    s = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    return np.argmax(s, axis=1)


def predict_boxes(V: Tensor, scores, p: layers.Params) -> Tensor:
    """Box ``(cx, cy, w, h)`` in (0, 1) per frame from its most relevant query."""
    T, _, d = V.shape
    q = tn.reshape(tn.gather_rows(V, best_query(scores)[:, None]), (T, d))
    hidden = tn.gelu(layers.dense(p, "box.fc1", q))
    return tn.sigmoid(layers.dense(p, "box.fc2", hidden))


def extract_tube(pred: BoundaryPrediction) -> PredictedTube:
    """Segment maximising ``start[s] * end[e]`` over ``s <= e`` (first in row-major order on ties)."""
    s = pred.start_dist.data if isinstance(pred.start_dist, Tensor) else np.asarray(pred.start_dist)
    e = pred.end_dist.data if isinstance(pred.end_dist, Tensor) else np.asarray(pred.end_dist)
    joint = np.triu(np.outer(s, e))
    joint[np.tril_indices(len(s), -1)] = -np.inf
    t_s, t_e = np.unravel_index(int(np.argmax(joint)), joint.shape)
    if pred.boxes is None:
        boxes = np.tile([0.5, 0.5, 1.0, 1.0], (len(s), 1))  # temporal-only prediction: whole frame
    else:
        boxes = pred.boxes.data if isinstance(pred.boxes, Tensor) else np.asarray(pred.boxes)
    return PredictedTube(int(t_s), int(t_e), boxes[t_s:t_e + 1])
