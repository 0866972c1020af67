"""
Reverse-mode differentiation on plain numpy arrays
==================================================

The numeric core records every operation on a Tensor into a graph; calling
backward() on a scalar walks that graph once and leaves d(loss)/d(x) on each
input. This script differentiates a small expression and checks the result
against central finite differences.
"""

import numpy as np

from deeptrack.numcore import Tensor, dense, swish

# -- a tiny computation ------------------------------------------------------

x = Tensor(np.array([[0.5, -1.0, 2.0]]), requires_grad=True)
w = Tensor(np.array([[0.1, 0.2, -0.3], [0.5, -0.5, 0.25]]), requires_grad=True)
b = Tensor(np.zeros(2), requires_grad=True)

loss = (swish(dense(x, w, b)) ** 2.0).sum()
loss.backward()

print("loss       ", loss.item())
print("d loss / dx", x.grad)
print("d loss / dw", w.grad, sep="\n")

# -- verify one entry numerically -------------------------------------------
# nudge w[0, 0] both ways and compare the slope with the recorded gradient

step = 1e-6
keep = w.data[0, 0]
w.data[0, 0] = keep + step
hi = (swish(dense(x, w, b)) ** 2.0).sum().item()
w.data[0, 0] = keep - step
lo = (swish(dense(x, w, b)) ** 2.0).sum().item()
w.data[0, 0] = keep

numeric = (hi - lo) / (2 * step)
print(f"\nw[0,0]: analytic {w.grad[0, 0]:.10f} vs numeric {numeric:.10f}")
assert abs(w.grad[0, 0] - numeric) < 1e-6

# -- gradients accumulate, so zero them between steps ------------------------

x.zero_grad(); w.zero_grad(); b.zero_grad()
(dense(x, w, b).sum() * 2.0).backward()
print("\nafter zero_grad + fresh backward, db =", b.grad)
