"""
Adapters that begin as identity maps
====================================

Each adapter adds a bottleneck branch to its input. The branch ends in a
zero-initialised projection, so a fresh adapter changes nothing, and training
starts from exactly the frozen model's behaviour.
"""

# %%
import numpy as np

from stgd import TrainConfig, STGDModel
from stgd.adapters import init_adapter, init_lora, lora_linear, st_adapter, temporal_adapter, temporal_diff_operator
from stgd.backbone import FrameBatch
from stgd.tensor import Tensor

rng = np.random.default_rng(1)

# %%
z = rng.normal(size=(8, 4, 4, 32))
p = init_adapter("st", 32, ratio=4, seed=0)
print("S-T adapter params:", {k: v.shape for k, v in p.tensors().items()})
print("fresh S-T output == input:", np.array_equal(st_adapter(Tensor(z), p).data, z))

# %% [markdown]
# Give the down-projection some weight and the temporal branch starts mixing
# neighbouring frames.

# %%
q = init_adapter("temporal", 8, ratio=2, seed=0)
q.w_down.data = rng.normal(size=q.w_down.shape) * 0.3
seq = np.zeros((5, 8))
seq[2] = 1.0                                  # a single spike at frame 2
moved = temporal_adapter(Tensor(seq), q).data - seq
print("per-frame change norm:", np.round(np.linalg.norm(moved, axis=1), 3))

# %% [markdown]
# The difference operator feeding the diff adapter is a forward difference
# with a zero last row.

# %%
print(temporal_diff_operator(Tensor([[1.0], [3.0], [6.0]])).data.ravel())

# %% [markdown]
# LoRA on the text projection follows the same rule: ``B`` starts at zero.

# %%
w = Tensor(rng.normal(size=(32, 64)))
tok = Tensor(rng.normal(size=(6, 32)))
print("fresh LoRA == frozen:", np.array_equal(lora_linear(tok, w, init_lora(32, 64)).data, tok.data @ w.data))

# %% [markdown]
# The same holds end to end: with fresh adapters the full model predicts
# exactly what the heads-only model predicts.

# %%
cfg = TrainConfig()
clip = FrameBatch(rng.normal(size=(cfg.T, cfg.H, cfg.W, cfg.C)), rng.normal(size=(cfg.L, cfg.d_text)))
a = STGDModel(cfg).forward(clip).prediction.start_dist.data
b = STGDModel(cfg, use_adapters=False).forward(clip).prediction.start_dist.data
print("start distributions identical:", np.array_equal(a, b))
