"""Parameter initialisers and the attention / feed-forward blocks shared by the
frozen backbone and the trainable temporal decoder.

Parameters live in flat ``dict[str, Tensor]`` stores keyed by dotted names.
"""

from typing import Dict, Optional

import numpy as np

from . import tensor as tn
from .tensor import Tensor

Params = Dict[str, Tensor]


def init_linear(store: Params, name: str, d_in: int, d_out: int, rng, trainable: bool, bias: bool = True):
    bound = 1.0 / np.sqrt(d_in)
    store[f"{name}.w"] = Tensor(rng.uniform(-bound, bound, size=(d_in, d_out)), requires_grad=trainable)
    if bias:
        store[f"{name}.b"] = Tensor(np.zeros(d_out), requires_grad=trainable)


def init_layer_norm(store: Params, name: str, d: int, trainable: bool):
    store[f"{name}.g"] = Tensor(np.ones(d), requires_grad=trainable)
    store[f"{name}.b"] = Tensor(np.zeros(d), requires_grad=trainable)


def init_mha(store: Params, name: str, d: int, rng, trainable: bool):
    for proj in ("q", "k", "v", "o"):
        init_linear(store, f"{name}.{proj}", d, d, rng, trainable)


def init_ffn(store: Params, name: str, d: int, hidden: int, rng, trainable: bool):
    init_linear(store, f"{name}.fc1", d, hidden, rng, trainable)
    init_linear(store, f"{name}.fc2", hidden, d, rng, trainable)


def dense(p: Params, name: str, x: Tensor) -> Tensor:
    return tn.linear(x, p[f"{name}.w"], p.get(f"{name}.b"))


def norm(p: Params, name: str, x: Tensor) -> Tensor:
    return tn.layer_norm(x, p[f"{name}.g"], p[f"{name}.b"])


def ffn(p: Params, name: str, x: Tensor) -> Tensor:
    return dense(p, f"{name}.fc2", tn.gelu(dense(p, f"{name}.fc1", x)))


def mha(p: Params, name: str, x_q: Tensor, x_kv: Tensor, n_heads: int,
        bias: Optional[Tensor] = None, return_weights: bool = False):
    """Multi-head attention on batched inputs ``(B, N_q, d)`` / ``(B, N_k, d)``.

    ``bias`` (``(B, heads, N_q, N_k)``) is added to the attention logits.
    """
    B, nq, d = x_q.shape
    nk = x_kv.shape[1]
    dh = d // n_heads

    def heads(x, n):
        return tn.transpose(tn.reshape(x, (B, n, n_heads, dh)), (0, 2, 1, 3))

    q = heads(dense(p, f"{name}.q", x_q), nq)
    k = heads(dense(p, f"{name}.k", x_kv), nk)
    v = heads(dense(p, f"{name}.v", x_kv), nk)
    out, weights = tn.attention(q, k, v, bias=bias, return_weights=True)
    out = tn.reshape(tn.transpose(out, (0, 2, 1, 3)), (B, nq, d))
    out = dense(p, f"{name}.o", out)
    return (out, weights) if return_weights else out
