"""
Training adapters against a heads-only baseline
===============================================

Both models share the same frozen backbone and the same grounding heads. One
of them also trains the adapters inside the backbone. Pass a step count on
the command line; the default is short enough to run in about a minute and
a half, and 800 steps reproduces the full comparison (a few minutes).
"""

# %%
import logging
import sys
import time

from stgd import TrainConfig, generate_dataset
from stgd.metrics import count_params, count_trainable_params
from stgd.training import evaluate, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
steps = int(sys.argv[1]) if len(sys.argv) > 1 else 150
cfg = TrainConfig(steps=steps, log_every=50)
train_set = generate_dataset(cfg, 64, 1)
val_set = generate_dataset(cfg, 16, 2)

# %%
t0 = time.time()
adapted = train(cfg, train_set, val_set)
print(f"adapters: {time.time() - t0:.0f}s")
t0 = time.time()
baseline = train(cfg, train_set, val_set, use_adapters=False)
print(f"heads only: {time.time() - t0:.0f}s")

# %%
for name, res in (("adapters", adapted), ("heads only", baseline)):
    m = res.model
    tr, va = evaluate(m, train_set), evaluate(m, val_set)
    print(f"{name:10s} trainable {count_trainable_params(m):7d} / {count_params(m)} "
          f"| train m_tIoU {tr['m_tiou']:.3f} m_vIoU {tr['m_viou']:.3f} "
          f"| val m_tIoU {va['m_tiou']:.3f} m_vIoU {va['m_viou']:.3f}")

# %% [markdown]
# Loss curves, every 50 steps.

# %%
for name, res in (("adapters", adapted), ("heads only", baseline)):
    print(name, [round(h["loss"], 3) for h in res.history[::50]])
