"""
Reverse-mode autograd on numpy arrays
=====================================

Every operation returns a Tensor that remembers its parents; calling
``backward()`` on a scalar walks the graph in reverse topological order.
Here we check it against central differences on a tiny two-layer network.
"""

import numpy as np

from maner import tensor as tn

rng = np.random.default_rng(0)

# %% a small network: x -> gelu(x W1 + b1) W2 -> masked cross-entropy
x = tn.Tensor(rng.normal(size=(5, 4)))
w1 = tn.Tensor(rng.normal(size=(4, 6)), requires_grad=True)
b1 = tn.Tensor(np.zeros(6), requires_grad=True)
w2 = tn.Tensor(rng.normal(size=(6, 3)), requires_grad=True)
labels = np.array([0, 2, -1, 1, -1])  # -1 rows are ignored by the loss


def loss_fn():
    h = tn.gelu(x @ w1 + b1)
    return tn.masked_cross_entropy(h @ w2, labels)


loss = loss_fn()
grads = tn.grad(loss, [w1, b1, w2])
print("loss", float(loss.data))

# %% central differences, one coordinate at a time
def numeric(param, h=1e-6):
    g = np.zeros_like(param.data)
    for idx in np.ndindex(param.shape):
        old = param.data[idx]
        param.data[idx] = old + h
        up = float(loss_fn().data)
        param.data[idx] = old - h
        down = float(loss_fn().data)
        param.data[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


for name, p, g in zip(["w1", "b1", "w2"], [w1, b1, w2], grads):
    n = numeric(p)
    print(f"{name}: max |analytic - numeric| = {np.abs(g - n).max():.2e}")

# %% one Adam step moves the loss down
state = tn.AdamState.for_params([w1.data, b1.data, w2.data], lr=1e-2)
tn.adam_step([w1.data, b1.data, w2.data], grads, state)
print("loss after one Adam step", float(loss_fn().data))

# %% non-finite values are caught where they appear
with np.errstate(divide="ignore"):
    try:
        tn.log(tn.Tensor(np.array([1.0, 0.0])))
    except tn.NonFiniteError as exc:
        print("caught:", exc)
