import numpy as np
import pytest

from stgd import tensor as tn
from stgd.backbone import FrameBatch, FrozenBackbone, init_adapter_set, language_guided_select
from stgd.errors import ConfigurationError, ValidationError
from stgd.gradcheck import grad_check
from stgd.tensor import Tensor


def clip(cfg, T=None, L=None, seed=0):
    rng = np.random.default_rng(seed)
    T = cfg.T if T is None else T
    L = cfg.L if L is None else L
    return FrameBatch(rng.normal(size=(T, cfg.H, cfg.W, cfg.C)), rng.normal(size=(L, cfg.d_text)))


def perturb(adapters, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    for t in adapters.named_tensors().values():
        t.data = t.data + scale * rng.normal(size=t.shape)
    return adapters


def test_frame_batch_validation():
    with pytest.raises(ValidationError):
        FrameBatch(np.ones((2, 4, 4)), np.ones((1, 3)))
    with pytest.raises(ValidationError):
        FrameBatch(np.full((1, 4, 4, 2), np.nan), np.ones((1, 3)))


def test_visual_shape_and_determinism(small_cfg):
    cfg = small_cfg.replace(T=4, H=8, W=8)
    bb = FrozenBackbone.from_config(cfg)
    b = clip(cfg)
    out = bb.encode_frames(b)
    assert out.shape == (4, 2, 2, cfg.d)
    again = FrozenBackbone.from_config(cfg).encode_frames(b)
    assert np.array_equal(out.data, again.data)


def test_fresh_adapters_do_not_change_any_stage(small_cfg):
    bb = FrozenBackbone.from_config(small_cfg)
    ad = init_adapter_set(small_cfg)
    b = clip(small_cfg)
    f0, f1 = bb.encode_frames(b), bb.encode_frames(b, ad.st)
    assert np.array_equal(f0.data, f1.data)
    (t0, c0), (t1, c1) = bb.encode_text(b), bb.encode_text(b, ad.lora)
    assert np.array_equal(t0.data, t1.data) and np.array_equal(c0.data, c1.data)
    v = bb.visual_tokens(f0)
    m0, m1 = bb.multimodal_fuse(v, t0), bb.multimodal_fuse(v, t0, ad)
    assert np.array_equal(m0[0].data, m1[0].data) and np.array_equal(m0[1].data, m1[1].data)
    assert m1[0].shape == v.shape and m1[1].shape == t0.shape
    sel = tn.gather_rows(m0[0], language_guided_select(m0[0], m0[1], small_cfg.N_q))
    q0, q1 = bb.decode_queries(sel, m0[1]), bb.decode_queries(sel, m0[1], ad)
    assert np.array_equal(q0.data, q1.data) and q1.shape == (small_cfg.T, small_cfg.N_q, small_cfg.d)


def test_text_single_token_and_permutation(small_cfg):
    bb = FrozenBackbone.from_config(small_cfg)
    one = clip(small_cfg, L=1)
    feats, cls = bb.encode_text(one)
    assert np.array_equal(cls.data, feats.data[0])
    b = clip(small_cfg, seed=3)
    perm = np.array([2, 0, 3, 1])
    pb = FrameBatch(b.video_features, b.text_tokens[perm])
    f, c = bb.encode_text(b)
    fp, cp = bb.encode_text(pb)
    assert np.allclose(fp.data, f.data[perm], atol=1e-12)
    assert np.allclose(cp.data, c.data, atol=1e-12)


def test_single_frame_fusion_has_no_cross_frame_mixing(small_cfg):
    cfg = small_cfg
    bb = FrozenBackbone.from_config(cfg)
    ad = perturb(init_adapter_set(cfg), 1)
    rng = np.random.default_rng(2)
    txt = Tensor(rng.normal(size=(3, cfg.d)))
    vis = Tensor(rng.normal(size=(1, 4, cfg.d)))
    mv, mt = bb.multimodal_fuse(vis, txt, ad)
    assert mv.shape == (1, 4, cfg.d) and mt.shape == (3, cfg.d)


def test_language_guided_select_cases():
    rng = np.random.default_rng(0)
    text = np.eye(4)[:2] * 3.0                      # two orthogonal text tokens
    vis = np.zeros((1, 5, 4))
    vis[0, :, 2:] = rng.normal(size=(5, 2)) * 0.1   # orthogonal to the text
    vis[0, 3] = text[1]
    assert language_guided_select(vis, text, 2)[0, 0] == 3
    same = np.ones((2, 6, 4))
    assert language_guided_select(same, text, 3).tolist() == [[0, 1, 2], [0, 1, 2]]
    idx = language_guided_select(rng.normal(size=(3, 6, 4)), text, 4)
    assert idx.shape == (3, 4) and idx.max() < 6
    with pytest.raises(ConfigurationError):
        language_guided_select(same, text, 7)


def test_language_guided_select_matches_brute_force():
    rng = np.random.default_rng(1)
    v, t = rng.normal(size=(3, 7, 5)), rng.normal(size=(4, 5))
    got = language_guided_select(v, t, 3)
    for f in range(3):
        s = [max(float(np.dot(v[f, j], t[i])) for i in range(4)) for j in range(7)]
        assert got[f].tolist() == sorted(range(7), key=lambda j: (-s[j], j))[:3]


def test_gradients_reach_decoder_adapters(small_cfg):
    bb = FrozenBackbone.from_config(small_cfg)
    ad = perturb(init_adapter_set(small_cfg), 4)
    rng = np.random.default_rng(5)
    sel = Tensor(rng.normal(size=(small_cfg.T, small_cfg.N_q, small_cfg.d)))
    txt = Tensor(rng.normal(size=(3, small_cfg.d)))
    r = Tensor(rng.normal(size=sel.shape))
    params = {f"dec1.{k}": v for k, v in ad.decoder_temporal[0].tensors().items()}
    params.update({f"diff.{k}": v for k, v in ad.decoder_diff.tensors().items()})
    rep = grad_check(lambda: tn.sum(tn.mul(bb.decode_queries(sel, txt, ad), r)), params, n_coords=5)
    assert rep.passed
    assert any(np.any(p.grad) for p in params.values())


def test_frozen_parameters_never_require_grad(small_cfg):
    bb = FrozenBackbone.from_config(small_cfg)
    assert not any(t.requires_grad for t in bb.params.values())
    assert bb.num_params() == sum(t.size for t in bb.params.values())


def test_channel_mismatch_rejected(small_cfg):
    bb = FrozenBackbone.from_config(small_cfg)
    bad = FrameBatch(np.ones((2, 8, 8, small_cfg.C + 1)), np.ones((1, small_cfg.d_text)))
    with pytest.raises(ConfigurationError):
        bb.encode_frames(bad)
