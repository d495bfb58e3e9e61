import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stgd import TrainConfig  # noqa: E402


@pytest.fixture
def small_cfg():
    """Shrunk config for fast end-to-end checks (same structure as the default)."""
    return TrainConfig(T=4, d=32, stage1_dim=16, backbone_ffn_mult=2, n_decoder_layers=1, temporal_layers=1,
                       C=8, n_patterns=4, n_fillers=6, L=4, d_text=16, steps=5, batch_size=2, log_every=2,
                       n_train=4, n_val=2)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
