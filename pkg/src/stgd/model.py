"""End-to-end grounding model: frozen backbone + adapters + grounding heads."""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import tensor as tn
from .backbone import AdapterSet, FrameBatch, FrozenBackbone, init_adapter_set, language_guided_select
from .heads import (BoundaryPrediction, aggregate_queries, extract_tube, fuse_global_local, init_heads,
                    predict_boundaries, predict_boxes, relevance_scores, temporal_decode, top_k_select)
from .losses import LossWeights, spatial_loss, temporal_loss, total_loss
from .tensor import Tensor
from .tubes import GroundTruthTube, PredictedTube


@dataclass
class ForwardOutput:
    prediction: BoundaryPrediction
    queries: Tensor          # V, (T, N_q, d)
    scores: Tensor           # cosine relevance, (T, N_q)
    mem_vision: Tensor
    sentence: Tensor         # c, (d,)


class STGDModel:
    """Frozen stub with optional adapters (``use_adapters=False`` gives the heads-only baseline)."""

    def __init__(self, cfg, use_adapters: Optional[bool] = None):
        self.cfg = cfg
        self.use_adapters = cfg.use_adapters if use_adapters is None else use_adapters
        self.backbone = FrozenBackbone.from_config(cfg)
        self.adapters: Optional[AdapterSet] = init_adapter_set(cfg) if self.use_adapters else None
        self.heads = init_heads(cfg)

    def named_parameters(self) -> Dict[str, Tensor]:
        """Every tensor under ``frozen/`` or ``trainable/``, in a fixed order."""
        out = {f"frozen/{k}": v for k, v in self.backbone.params.items()}
        if self.adapters is not None:
            out.update({f"trainable/adapters.{k}": v for k, v in self.adapters.named_tensors().items()})
        out.update({f"trainable/heads.{k}": v for k, v in self.heads.items()})
        return out

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {k: v for k, v in self.named_parameters().items() if k.startswith("trainable/")}

    def frozen_parameters(self) -> Dict[str, Tensor]:
        return {k: v for k, v in self.named_parameters().items() if k.startswith("frozen/")}

    def forward(self, batch: FrameBatch) -> ForwardOutput:
        cfg, bb, ad = self.cfg, self.backbone, self.adapters
        fmap = bb.encode_frames(batch, ad.st if ad is not None else None)
        tokens, sentence = bb.encode_text(batch, ad.lora if ad is not None else None)
        mem_v, mem_t = bb.multimodal_fuse(bb.visual_tokens(fmap), tokens, ad)
        selected = tn.gather_rows(mem_v, language_guided_select(mem_v, mem_t, cfg.N_q))
        V = bb.decode_queries(selected, mem_t, ad)

        scores = relevance_scores(V, sentence)
        f_agg = aggregate_queries(V, scores, top_k_select(scores, cfg.K))
        h = temporal_decode(fuse_global_local(f_agg, mem_v, self.heads), self.heads, cfg.n_heads)
        pred = predict_boundaries(h, self.heads)
        pred.boxes = predict_boxes(V, scores, self.heads)
        pred.query_conf = scores.data.max(axis=1)
        return ForwardOutput(pred, V, scores, mem_v, sentence)

    def loss_terms(self, batch: FrameBatch, gt: GroundTruthTube, weights: Optional[LossWeights] = None):
        """(total, temporal, spatial) for one clip with a single text query."""
        w = self.cfg.loss_weights if weights is None else weights
        pred = self.forward(batch).prediction
        lt = temporal_loss(pred, gt, w, self.cfg.sigma)
        ls = spatial_loss(pred.boxes, gt, w)
        return total_loss([(lt, ls)]), lt, ls

    def loss(self, batch: FrameBatch, gt: GroundTruthTube, weights: Optional[LossWeights] = None) -> Tensor:
        return self.loss_terms(batch, gt, weights)[0]

    def predict(self, batch: FrameBatch) -> PredictedTube:
        with tn.no_grad():
            return extract_tube(self.forward(batch).prediction)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data for k, v in self.named_parameters().items()}
