"""
Reverse-mode gradients on a tiny numpy core
===========================================

Everything in ``stgd`` runs on one small tensor type. This walk-through builds
a two-layer function by hand, backpropagates through it and then checks the
answer against central finite differences.
"""

# %%
import numpy as np

from stgd import tensor as tn
from stgd.gradcheck import grad_check
from stgd.tensor import Tape, Tensor

rng = np.random.default_rng(0)

# %% [markdown]
# A leaf tensor asks for a gradient with ``requires_grad=True``. Nothing
# broadcasts implicitly: biases go through ``add_bias`` and everything else
# must match shape exactly.

# %%
x = Tensor(rng.normal(size=(5, 3)))
W1 = Tensor(rng.normal(size=(3, 4)) * 0.5, requires_grad=True)
b1 = Tensor(np.zeros(4), requires_grad=True)
W2 = Tensor(rng.normal(size=(4, 1)) * 0.5, requires_grad=True)

def f():
    h = tn.gelu(tn.linear(x, W1, b1))
    return tn.mean(tn.mul(tn.linear(h, W2), tn.linear(h, W2)))

loss = f()
loss.backward()
print("loss", loss.item())
print("dL/dW2", W2.grad.ravel())

# %% [markdown]
# A ``Tape`` records the primitive ops in the order they ran; replaying it in
# reverse gives the same gradients.

# %%
for p in (W1, b1, W2):
    p.grad = None
with Tape() as tape:
    loss = f()
print(tape.ops)
tape.backward(loss)
print("dL/dW2 via tape", W2.grad.ravel())

# %% [markdown]
# ``grad_check`` perturbs sampled coordinates by ``+-h`` and compares.

# %%
rep = grad_check(f, {"W1": W1, "b1": b1, "W2": W2}, h=1e-5, n_coords=6)
print(f"max relative error {rep.max_rel_error:.2e}, passed={rep.passed}")
for name, err in rep.per_param().items():
    print(f"  {name:3s} {err:.2e}")
