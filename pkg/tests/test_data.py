import json

import numpy as np
import pytest

from stgd import TrainConfig
from stgd.data import (box_mask, generate_dataset, make_world, matched_filter_tiou, read_jsonl, sample_to_record,
                       write_jsonl)
from stgd.errors import ConfigurationError, ValidationError


def test_same_seed_bitwise_identical():
    cfg = TrainConfig()
    a, b = generate_dataset(cfg, 6, 11), generate_dataset(cfg, 6, 11)
    for x, y in zip(a, b):
        assert np.array_equal(x.batch.video_features, y.batch.video_features)
        assert np.array_equal(x.batch.text_tokens, y.batch.text_tokens)
        assert (x.tube.t_s, x.tube.t_e) == (y.tube.t_s, y.tube.t_e)
    c = generate_dataset(cfg, 6, 12)
    assert not np.array_equal(a[0].batch.video_features, c[0].batch.video_features)


def test_prefix_stable_across_sizes():
    cfg = TrainConfig()
    small, big = generate_dataset(cfg, 3, 4), generate_dataset(cfg, 8, 4)
    assert all(np.array_equal(s.batch.video_features, b.batch.video_features) for s, b in zip(small, big))


def test_tubes_valid_and_pattern_present():
    cfg = TrainConfig()
    world = make_world(cfg)
    for s in generate_dataset(cfg, 40, 0):
        assert 0 <= s.tube.t_s <= s.tube.t_e < cfg.T
        pat = world.patterns[s.target]
        t = s.tube.t_s
        inside = s.batch.video_features[t][box_mask(s.tube.box_at(t), cfg.H, cfg.W)] @ pat
        assert inside.size > 0 and inside.mean() > 0.5 * pat @ pat


def test_world_patterns_orthogonal():
    w = make_world(TrainConfig())
    g = w.patterns @ w.patterns.T
    assert np.allclose(g, np.diag(np.diag(g)), atol=1e-12)
    assert np.allclose(np.diag(g), 1.5 ** 2)


def test_matched_filter_solves_task():
    cfg = TrainConfig()
    ds = generate_dataset(cfg, 200, 3)
    world = make_world(cfg)
    hits = sum(matched_filter_tiou(cfg, s, world) >= 0.9 for s in ds)
    assert hits >= 0.95 * len(ds)


def test_jsonl_roundtrip(tmp_path):
    cfg = TrainConfig()
    ds = generate_dataset(cfg, 3, 1)
    path = tmp_path / "d.jsonl"
    write_jsonl(ds, path)
    back = read_jsonl(path)
    for a, b in zip(ds, back):
        assert np.array_equal(a.batch.video_features, b.batch.video_features)
        assert np.array_equal(a.tube.boxes, b.tube.boxes)
        assert (a.id, a.seed, a.target) == (b.id, b.seed, b.target)
    rec = json.loads(path.read_text().splitlines()[0])
    for key in ("id", "seed", "T", "H", "W", "C", "L", "video_features", "text_tokens", "t_s", "t_e", "boxes"):
        assert key in rec


def test_jsonl_rejects_bad_records(tmp_path):
    cfg = TrainConfig()
    rec = sample_to_record(generate_dataset(cfg, 1, 0)[0])
    bad = dict(rec)
    del bad["boxes"]
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(bad) + "\n")
    with pytest.raises(ValidationError, match="boxes"):
        read_jsonl(p)
    bad = dict(rec, video_features=rec["video_features"][:-1])
    p.write_text(json.dumps(bad) + "\n")
    with pytest.raises(ValidationError):
        read_jsonl(p)
    p.write_text("{not json\n")
    with pytest.raises(ValidationError):
        read_jsonl(p)


def test_dataset_size_validation():
    with pytest.raises(ConfigurationError):
        generate_dataset(TrainConfig(), 0, 0)
