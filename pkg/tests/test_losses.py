import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import gaussian_reference
from stgd import tensor as tn
from stgd.boxes import box_iou, giou, giou_tensor
from stgd.errors import ValidationError
from stgd.gradcheck import grad_check
from stgd.heads import BoundaryPrediction
from stgd.losses import (LossWeights, bce_mask, gt_boundary_distribution, kl_div, spatial_loss, temporal_loss,
                         total_loss)
from stgd.tensor import Tensor
from stgd.tubes import GroundTruthTube

LN2 = math.log(2.0)


def test_kl_values():
    assert abs(kl_div([1.0, 0.0], Tensor([0.5, 0.5])).item() - LN2) < 1e-9
    p = np.array([0.2, 0.3, 0.5])
    assert abs(kl_div(p, Tensor(p)).item()) < 1e-9
    with pytest.raises(ValidationError):
        kl_div([0.5, 0.6], Tensor([0.5, 0.5]))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 31))
def test_kl_nonnegative(n, seed):
    rng = np.random.default_rng(seed)
    assert kl_div(rng.dirichlet(np.ones(n)), Tensor(rng.dirichlet(np.ones(n)))).item() >= -1e-12


def test_bce_values():
    assert abs(bce_mask([1.0, 1.0], Tensor([0.5, 0.5])).item() - LN2) < 1e-9
    assert bce_mask([1.0, 0.0], Tensor([1 - 1e-12, 1e-12])).item() < 1e-9
    with pytest.raises(ValidationError):
        bce_mask([1.0], Tensor([1.5]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=6), st.integers(0, 2 ** 31))
def test_bce_symmetry(y, seed):
    y = np.array(y)
    p = np.random.default_rng(seed).uniform(0.01, 0.99, size=len(y))
    a = bce_mask(y, Tensor(p)).item()
    b = bce_mask(1 - y, Tensor(1 - p)).item()
    assert abs(a - b) < 1e-12


def test_gaussian_target_values():
    got = gt_boundary_distribution(2, 5, 1.0)
    expected = [0.054488684549642945, 0.24420134200323335, 0.40261994689424746,
                0.24420134200323335, 0.054488684549642945]
    assert np.abs(got - expected).max() < 1e-12
    assert np.abs(got - gaussian_reference(2, 5, 1.0)).max() < 1e-15
    assert gt_boundary_distribution(3, 6, 1e-6).tolist() == [0, 0, 0, 1, 0, 0]
    with pytest.raises(ValidationError):
        gt_boundary_distribution(5, 5)


@given(st.integers(2, 12), st.data())
def test_gaussian_target_symmetric(T, data):
    t = data.draw(st.integers(0, T - 1))
    k = data.draw(st.integers(0, min(t, T - 1 - t)))
    g = gt_boundary_distribution(t, T, 1.0)
    assert g[t - k] == g[t + k] and abs(g.sum() - 1) < 1e-12


def test_giou_values():
    assert giou([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert abs(giou([0, 0, 1, 1], [1, 1, 2, 2]) - (-0.5)) < 1e-9
    with pytest.raises(ValidationError):
        giou([0, 0, 0, 1], [0, 0, 1, 1])


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=4), st.lists(st.floats(0.05, 1), min_size=4, max_size=4))
def test_giou_bounded_by_iou(xy, wh):
    a = [xy[0], xy[1], xy[0] + wh[0], xy[1] + wh[1]]
    b = [xy[2], xy[3], xy[2] + wh[2], xy[3] + wh[3]]
    assert giou(a, b) <= box_iou(a, b) + 1e-12
    assert -1 < giou(a, b) <= 1


def test_giou_tensor_matches_scalar_and_gradients():
    rng = np.random.default_rng(0)
    pred = np.column_stack([rng.uniform(0.3, 0.7, (5, 2)), rng.uniform(0.2, 0.5, (5, 2))])
    gt = np.column_stack([rng.uniform(0.3, 0.7, (5, 2)), rng.uniform(0.2, 0.5, (5, 2))])

    def corners(b):
        return [b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2]

    got = giou_tensor(Tensor(pred), gt).data
    assert np.allclose(got, [giou(corners(p), corners(g)) for p, g in zip(pred, gt)], atol=1e-14)
    x = Tensor(pred, requires_grad=True)
    assert grad_check(lambda: tn.sum(giou_tensor(x, gt)), {"x": x}).passed


def uniform_pred(T, boxes=None):
    u = Tensor(np.full(T, 1 / T))
    return BoundaryPrediction(u, u, Tensor(np.full(T, 0.5)), boxes)


def test_temporal_loss_component_oracle():
    gt = GroundTruthTube(1, 2, [[0.5, 0.5, 0.2, 0.2]] * 2)
    got = temporal_loss(uniform_pred(4), gt).item()
    kl = 0.0
    for t in (1, 2):
        g = gaussian_reference(t, 4, 1.0)
        kl += math.fsum(p * math.log((p + 1e-12) / (0.25 + 1e-12)) for p in g)
    assert abs(got - (kl + LN2)) < 1e-12


def test_temporal_loss_zero_at_optimum_and_zero_weights():
    gt = GroundTruthTube(1, 3, [[0.5, 0.5, 0.2, 0.2]] * 3)
    T = 6
    mask = gt.mask(T)
    pred = BoundaryPrediction(Tensor(gt_boundary_distribution(1, T)), Tensor(gt_boundary_distribution(3, T)),
                              Tensor(np.where(mask == 1, 1 - 1e-12, 1e-12)))
    assert temporal_loss(pred, gt).item() < 1e-6
    zero = LossWeights(0, 0, 0, 0, 0)
    assert temporal_loss(uniform_pred(T), gt, zero).item() == 0.0
    assert spatial_loss(Tensor(np.full((T, 4), 0.3)), gt, zero).item() == 0.0


def test_spatial_loss_hand_case():
    gt = GroundTruthTube(2, 2, [[0.6, 0.5, 0.4, 0.4]])
    boxes = np.full((4, 4), 0.5)
    boxes[2] = [0.5, 0.5, 0.4, 0.4]
    # offset 0.1 in cx: smoothL1 = 0.5 * 0.01; IoU = 0.12 / 0.2 = 0.6 and the hull equals the union
    expected = 5 * 0.005 + 2 * (1 - 0.6)
    assert abs(spatial_loss(Tensor(boxes), gt).item() - expected) < 1e-12


def test_spatial_loss_perfect_boxes():
    gt = GroundTruthTube(0, 2, [[0.3, 0.4, 0.2, 0.3], [0.5, 0.5, 0.3, 0.3], [0.6, 0.6, 0.2, 0.2]])
    boxes = np.vstack([gt.boxes, [[0.1, 0.1, 0.1, 0.1]]])
    assert abs(spatial_loss(Tensor(boxes), gt).item()) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_spatial_loss_ignores_frames_outside_segment(seed):
    rng = np.random.default_rng(seed)
    T = 8
    t_s = int(rng.integers(0, T))
    t_e = int(rng.integers(t_s, T))
    gt = GroundTruthTube(t_s, t_e, np.column_stack([rng.uniform(0.3, 0.7, (t_e - t_s + 1, 2)),
                                                    rng.uniform(0.1, 0.5, (t_e - t_s + 1, 2))]))
    boxes = rng.uniform(0.1, 0.9, (T, 4))
    other = boxes.copy()
    outside = np.ones(T, bool)
    outside[t_s:t_e + 1] = False
    other[outside] = rng.uniform(0.1, 0.9, (int(outside.sum()), 4))
    a = spatial_loss(Tensor(boxes), gt).item()
    b = spatial_loss(Tensor(other), gt).item()
    assert a == b


def test_spatial_gradient_is_zero_outside_segment():
    gt = GroundTruthTube(1, 2, [[0.5, 0.5, 0.3, 0.3]] * 2)
    x = Tensor(np.full((5, 4), 0.4), requires_grad=True)
    spatial_loss(x, gt).backward()
    assert not np.any(x.grad[[0, 3, 4]]) and np.any(x.grad[1:3])


def test_total_loss_sums_queries():
    lt, ls = Tensor(1.25), Tensor(0.5)
    assert total_loss([(lt, ls)]).item() == 1.75
    assert total_loss([(lt, ls), (lt, ls)]).item() == 2 * total_loss([(lt, ls)]).item()
    with pytest.raises(ValidationError):
        total_loss([])


def test_loss_weights_validation():
    with pytest.raises(ValidationError):
        LossWeights(lambda_box=-1.0)


def test_bce_clips_saturated_confidence():
    v = bce_mask([1.0, 0.0], Tensor([0.0, 1.0])).item()
    hi = 1.0 - 1e-12   # rounds, so 1 - hi is not exactly 1e-12
    assert abs(v - (-math.log(1e-12) - math.log(1.0 - hi)) / 2) < 1e-12
    assert bce_mask([1.0, 0.0], Tensor([1.0, 0.0])).item() < 1e-11
