import json

import pytest

from stgd import TrainConfig, load_config
from stgd.errors import ConfigurationError, ValidationError
from stgd.losses import LossWeights


def test_defaults_valid():
    cfg = TrainConfig()
    assert (cfg.T, cfg.H, cfg.W, cfg.d) == (8, 8, 8, 64)
    assert cfg.K <= cfg.N_q <= cfg.n_visual_tokens


@pytest.mark.parametrize("change", [{"K": 5}, {"T": 1}, {"H": 6}, {"d": 63}, {"lr": 0.0}, {"steps": 0},
                                    {"N_q": 8, "K": 2}, {"adapter_ratio": 3}])
def test_invalid_configs(change):
    with pytest.raises(ConfigurationError):
        TrainConfig(**change)


def test_dict_roundtrip_and_file(tmp_path):
    cfg = TrainConfig(seed=3, loss_weights=LossWeights(lambda_box=2.0))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 7, "loss_weights": {"lambda_giou": 1.0}}))
    loaded = load_config(p)
    assert loaded.seed == 7 and loaded.loss_weights.lambda_giou == 1.0
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"sede": 1})
    p.write_text("[1, 2]")
    with pytest.raises(ValidationError):
        load_config(p)
