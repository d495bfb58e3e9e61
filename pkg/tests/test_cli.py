import json

import pytest

from stgd.cli import main

REPORT_KEYS = {"m_tiou", "m_viou", "viou_at_03", "viou_at_05", "tp_trainable", "tp_total", "n_samples"}


@pytest.fixture
def cfg_file(tmp_path, small_cfg):
    p = tmp_path / "cfg.json"
    p.write_text(small_cfg.dumps())
    return p


def test_count_params_default(capsys):
    assert main(["count-params"]) == 0
    out = dict(line.split() for line in capsys.readouterr().out.strip().splitlines())
    assert int(out["total"]) == int(out["frozen"]) + int(out["trainable"])
    assert abs(float(out["fraction"]) - int(out["trainable"]) / int(out["total"])) < 1e-4


def test_pipeline_gen_train_eval(tmp_path, cfg_file, capsys):
    data = tmp_path / "train.jsonl"
    ckpt = tmp_path / "model.json"
    report = tmp_path / "report.json"
    assert main(["gen-data", "--config", str(cfg_file), "--out", str(data), "--n", "3", "--seed", "4"]) == 0
    assert len(data.read_text().splitlines()) == 3
    assert main(["train", "--config", str(cfg_file), "--data", str(data), "--out", str(ckpt)]) == 0
    assert ckpt.exists() and ckpt.with_suffix(".bin").exists()
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--report", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert set(rep) == REPORT_KEYS and rep["n_samples"] == 3
    assert all(0 <= rep[k] <= 1 for k in ("m_tiou", "m_viou", "viou_at_03", "viou_at_05"))


def test_gradcheck_exit_codes(cfg_file, capsys):
    assert main(["gradcheck", "--config", str(cfg_file), "--n-coords", "2"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["gradcheck", "--config", str(cfg_file), "--n-coords", "2", "--tol", "1e-30"]) != 0
    assert "FAIL" in capsys.readouterr().out


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["count-params", "--nope"]) == 2
    assert main([]) == 2
    assert main(["count-params", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["eval", "--ckpt", str(tmp_path / "x.json"), "--data", str(tmp_path / "y.jsonl")]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_validation_failure_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"K": 9}))
    assert main(["count-params", "--config", str(bad)]) == 1
    assert "K=9" in capsys.readouterr().err
    data = tmp_path / "d.jsonl"
    data.write_text('{"id": 0}\n')
    assert main(["train", "--data", str(data), "--out", str(tmp_path / "m.json")]) == 1
