"""
Frozen, seed-deterministic stand-in for an open-vocabulary grounding detector.

The stub mirrors the detector's data flow at toy scale: a two-stage visual
encoder, a text encoder, one bi-attention fusion block, language-guided query
selection and a cross-modality query decoder. None of its weights train; the
adapter hooks are the only way the pipeline changes.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import layers
from . import tensor as tn
from .adapters import (AdapterParams, LoRAParams, init_adapter, init_lora, lora_linear, st_adapter,
                       temporal_adapter, temporal_diff_adapter)
from .errors import ConfigurationError, ValidationError
from .tensor import Tensor


@dataclass
class FrameBatch:
    """One clip: ``video_features`` ``(T, H, W, C)`` and ``text_tokens`` ``(L, d_text)``."""

    video_features: np.ndarray
    text_tokens: np.ndarray

    def __post_init__(self):
        self.video_features = np.asarray(self.video_features, dtype=np.float64)
        self.text_tokens = np.asarray(self.text_tokens, dtype=np.float64)
        if self.video_features.ndim != 4 or self.text_tokens.ndim != 2:
            raise ValidationError(
                f"expected video (T, H, W, C) and text (L, d), got {self.video_features.shape} "
                f"and {self.text_tokens.shape}")
        if self.frame_count < 1 or self.token_count < 1:
            raise ValidationError("a clip needs at least one frame and one text token")
        if not (np.all(np.isfinite(self.video_features)) and np.all(np.isfinite(self.text_tokens))):
            raise ValidationError("clip contains non-finite values")

    @property
    def frame_count(self) -> int:
        return self.video_features.shape[0]

    @property
    def token_count(self) -> int:
        return self.text_tokens.shape[0]


@dataclass
class AdapterSet:
    """Every trainable insertion into the backbone, by hook point."""

    st: List[AdapterParams]
    fuse_temporal: AdapterParams
    fuse_diff_pre: AdapterParams
    fuse_diff_post: AdapterParams
    decoder_temporal: List[AdapterParams]
    decoder_diff: AdapterParams
    lora: LoRAParams

    def named_tensors(self):
        out = {}
        for i, a in enumerate(self.st):
            out.update({f"st{i + 1}.{k}": v for k, v in a.tensors().items()})
        for name in ("fuse_temporal", "fuse_diff_pre", "fuse_diff_post"):
            out.update({f"{name}.{k}": v for k, v in getattr(self, name).tensors().items()})
        for i, a in enumerate(self.decoder_temporal):
            out.update({f"dec{i + 1}_temporal.{k}": v for k, v in a.tensors().items()})
        out.update({f"decoder_diff.{k}": v for k, v in self.decoder_diff.tensors().items()})
        out.update({f"lora.{k}": v for k, v in self.lora.tensors().items()})
        return out


def init_adapter_set(cfg, seed: Optional[int] = None) -> AdapterSet:
    seed = cfg.seed if seed is None else seed
    ss = iter(np.random.SeedSequence([seed, 0xADA]).generate_state(32))

    def make(kind, dim):
        return init_adapter(kind, dim, cfg.adapter_ratio, int(next(ss)), cfg.adapter_kernel)

    return AdapterSet(
        st=[make("st", dim) for dim in cfg.stage_dims],
        fuse_temporal=make("temporal", cfg.d),
        fuse_diff_pre=make("temporal_diff", cfg.d),
        fuse_diff_post=make("temporal_diff", cfg.d),
        decoder_temporal=[make("temporal", cfg.d) for _ in range(cfg.n_decoder_layers)],
        decoder_diff=make("temporal_diff", cfg.d),
        lora=init_lora(cfg.d_text, cfg.d, cfg.lora_rank, cfg.lora_alpha, int(next(ss))),
    )


class FrozenBackbone:
    """Seeded frozen weights plus the forward stages that use them."""

    def __init__(self, params: layers.Params, *, stage_dims, d, n_heads, n_decoder_layers, seed):
        self.params = params
        self.stage_dims = tuple(stage_dims)
        self.d = d
        self.n_heads = n_heads
        self.n_decoder_layers = n_decoder_layers
        self.seed = seed

    @classmethod
    def from_config(cls, cfg, seed: Optional[int] = None) -> "FrozenBackbone":
        seed = cfg.seed if seed is None else seed
        rng = np.random.default_rng([seed, 0xBB])
        p: layers.Params = {}
        d, hidden = cfg.d, cfg.d * cfg.backbone_ffn_mult
        c_in = cfg.C
        for i, c_out in enumerate(cfg.stage_dims):
            layers.init_linear(p, f"visual.stage{i + 1}", c_in, c_out, rng, False)
            c_in = c_out
        p["visual.pos_embed"] = Tensor(rng.normal(0.0, 0.5, size=(cfg.n_visual_tokens, d)))
        layers.init_linear(p, "text.proj", cfg.d_text, d, rng, False)
        layers.init_mha(p, "text.attn", d, rng, False)
        layers.init_layer_norm(p, "text.ln1", d, False)
        layers.init_ffn(p, "text.ffn", d, hidden, rng, False)
        layers.init_layer_norm(p, "text.ln2", d, False)
        for side in ("v", "t"):
            layers.init_mha(p, f"fusion.attn_{side}", d, rng, False)
            layers.init_layer_norm(p, f"fusion.ln1_{side}", d, False)
            layers.init_ffn(p, f"fusion.ffn_{side}", d, hidden, rng, False)
            layers.init_layer_norm(p, f"fusion.ln2_{side}", d, False)
        for i in range(cfg.n_decoder_layers):
            name = f"decoder{i + 1}"
            layers.init_mha(p, f"{name}.self_attn", d, rng, False)
            layers.init_layer_norm(p, f"{name}.ln1", d, False)
            layers.init_mha(p, f"{name}.cross_attn", d, rng, False)
            layers.init_layer_norm(p, f"{name}.ln2", d, False)
            layers.init_ffn(p, f"{name}.ffn", d, hidden, rng, False)
            layers.init_layer_norm(p, f"{name}.ln3", d, False)
        return cls(p, stage_dims=cfg.stage_dims, d=d, n_heads=cfg.n_heads,
                   n_decoder_layers=cfg.n_decoder_layers, seed=seed)

    def num_params(self) -> int:
        return int(np.sum([t.size for t in self.params.values()]))

    # -- visual ------------------------------------------------------------

    def encode_frames(self, b: FrameBatch, st_adapters: Optional[List[AdapterParams]] = None) -> Tensor:
        """Two stages of projection + GELU + 2x2 mean downsample, with an S-T adapter after each."""
        T, H, W, C = b.video_features.shape
        if H % 4 or W % 4:
            raise ConfigurationError(f"frame size {H}x{W} is not divisible by 4")
        if C != self.params["visual.stage1.w"].shape[0]:
            raise ConfigurationError(f"video has {C} channels, stage 1 expects "
                                     f"{self.params['visual.stage1.w'].shape[0]}")
        if st_adapters is not None:
            if len(st_adapters) != len(self.stage_dims):
                raise ConfigurationError(f"need {len(self.stage_dims)} S-T adapters, got {len(st_adapters)}")
            for i, (a, dim) in enumerate(zip(st_adapters, self.stage_dims)):
                if a.dim != dim or a.kind != "st":
                    raise ConfigurationError(f"S-T adapter {i + 1} ({a.kind}, dim {a.dim}) does not fit "
                                             f"stage output dim {dim}")
        x = Tensor(b.video_features)
        for i in range(len(self.stage_dims)):
            x = tn.gelu(layers.dense(self.params, f"visual.stage{i + 1}", x))
            x = _downsample2x2(x)
            if st_adapters is not None:
                x = st_adapter(x, st_adapters[i])
        return x

    def visual_tokens(self, feature_map: Tensor) -> Tensor:
        """Flatten ``(T, H', W', d)`` to ``(T, N_v, d)`` and add the frozen position embedding."""
        T, h, w, d = feature_map.shape
        pos = self.params["visual.pos_embed"]
        if pos.shape[0] != h * w:
            raise ConfigurationError(f"position table has {pos.shape[0]} slots, map has {h * w} tokens")
        x = tn.reshape(feature_map, (T, h * w, d))
        return tn.add(x, tn.expand(tn.reshape(pos, (1, h * w, d)), (T, h * w, d)))

    # -- text --------------------------------------------------------------

    def encode_text(self, b: FrameBatch, lora: Optional[LoRAParams] = None) -> Tuple[Tensor, Tensor]:
        """Token features ``(L, d)`` and their mean as the sentence vector."""
        p = self.params
        x = lora_linear(Tensor(b.text_tokens), p["text.proj.w"], lora)
        x = tn.add_bias(x, p["text.proj.b"])
        L = x.shape[0]
        x = tn.reshape(x, (1, L, self.d))
        x = layers.norm(p, "text.ln1", tn.add(x, layers.mha(p, "text.attn", x, x, self.n_heads)))
        x = layers.norm(p, "text.ln2", tn.add(x, layers.ffn(p, "text.ffn", x)))
        x = tn.reshape(x, (L, self.d))
        return x, tn.mean(x, axis=0)

    # -- fusion ------------------------------------------------------------

    def multimodal_fuse(self, vis: Tensor, txt: Tensor, adapters: Optional[AdapterSet] = None):
        """Temporal + pre-fusion diff adapters, frozen bi-attention, post-fusion diff adapter."""
        T, N, d = vis.shape
        L = txt.shape[0]
        if d != self.d or txt.shape[1] != self.d:
            raise ConfigurationError(f"fusion expects feature dim {self.d}, got vision {vis.shape}, text {txt.shape}")
        p = self.params
        if adapters is not None:
            vis = temporal_adapter(vis, adapters.fuse_temporal)
            vis = temporal_diff_adapter(vis, adapters.fuse_diff_pre)
        vf = tn.reshape(vis, (1, T * N, d))
        tf = tn.reshape(txt, (1, L, d))
        v2 = layers.norm(p, "fusion.ln1_v", tn.add(vf, layers.mha(p, "fusion.attn_v", vf, tf, self.n_heads)))
        v2 = layers.norm(p, "fusion.ln2_v", tn.add(v2, layers.ffn(p, "fusion.ffn_v", v2)))
        t2 = layers.norm(p, "fusion.ln1_t", tn.add(tf, layers.mha(p, "fusion.attn_t", tf, vf, self.n_heads)))
        t2 = layers.norm(p, "fusion.ln2_t", tn.add(t2, layers.ffn(p, "fusion.ffn_t", t2)))
        mem_vision = tn.reshape(v2, (T, N, d))
        mem_text = tn.reshape(t2, (L, d))
        if adapters is not None:
            mem_vision = temporal_diff_adapter(mem_vision, adapters.fuse_diff_post)
        return mem_vision, mem_text

    # -- decoder -----------------------------------------------------------

    def decode_queries(self, selected: Tensor, mem_text: Tensor, adapters: Optional[AdapterSet] = None,
                       n_layers: Optional[int] = None) -> Tensor:
        """Per layer: temporal adapter over T, frozen self-attention within each frame,
        cross-attention to the text memory, feed-forward. A diff adapter follows the stack."""
        n_layers = self.n_decoder_layers if n_layers is None else n_layers
        if not 1 <= n_layers <= self.n_decoder_layers:
            raise ConfigurationError(f"n_layers must lie in [1, {self.n_decoder_layers}], got {n_layers}")
        T, nq, d = selected.shape
        if d != self.d:
            raise ConfigurationError(f"decoder expects dim {self.d}, got {selected.shape}")
        if adapters is not None and len(adapters.decoder_temporal) < n_layers:
            raise ConfigurationError(f"{len(adapters.decoder_temporal)} decoder adapters for {n_layers} layers")
        p = self.params
        L = mem_text.shape[0]
        txt = tn.reshape(mem_text, (1, L, d))
        q = selected
        for i in range(n_layers):
            name = f"decoder{i + 1}"
            if adapters is not None:
                q = temporal_adapter(q, adapters.decoder_temporal[i])
            q = layers.norm(p, f"{name}.ln1", tn.add(q, layers.mha(p, f"{name}.self_attn", q, q, self.n_heads)))
            qf = tn.reshape(q, (1, T * nq, d))
            cross = tn.reshape(layers.mha(p, f"{name}.cross_attn", qf, txt, self.n_heads), (T, nq, d))
            q = layers.norm(p, f"{name}.ln2", tn.add(q, cross))
            q = layers.norm(p, f"{name}.ln3", tn.add(q, layers.ffn(p, f"{name}.ffn", q)))
        if adapters is not None:
            q = temporal_diff_adapter(q, adapters.decoder_diff)
        return q


def _downsample2x2(x: Tensor) -> Tensor:
    T, H, W, C = x.shape
    return tn.mean(tn.reshape(x, (T, H // 2, 2, W // 2, 2, C)), axis=(2, 4))


def language_guided_select(mem_vision, mem_text, n_q: int) -> np.ndarray:
    """Indices ``(T, n_q)`` of the visual tokens with the largest max-dot-product
    against any text token, best first, ties to the lower index."""
    v = mem_vision.data if isinstance(mem_vision, Tensor) else np.asarray(mem_vision)
    t = mem_text.data if isinstance(mem_text, Tensor) else np.asarray(mem_text)
    if not 1 <= n_q <= v.shape[1]:
        raise ConfigurationError(f"cannot select {n_q} queries from {v.shape[1]} visual tokens")
    scores = (v @ t.T).max(axis=-1)
    return np.argsort(-scores, axis=1, kind="stable")[:, :n_q]
