"""Tour of the tensor engine: the tape, gradients, and the finite-difference oracle.

Run:  python3 demos/01_tensors_and_gradients.py
"""

import numpy as np

from modkit import AdamW, grad_check, mse, softmax, tensor

# ---- forward math records a tape ------------------------------------------------

x = tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
w = tensor(np.eye(2), requires_grad=True)
loss = mse(x @ w, tensor([[2.0, 1.0], [0.0, 1.0]]))
print("loss:", loss.item())

loss.backward()
print("d loss / d w:\n", w.grad)

# ---- every gradient is checked against central differences ----------------------

a = tensor(np.random.default_rng(0).standard_normal((4, 4)), requires_grad=True)
err = grad_check(lambda: (softmax(a, axis=-1) * a).sum(), [a], eps=1e-5)
print(f"softmax-mix gradient max relative error: {err:.2e}")

# ---- a small optimization loop ---------------------------------------------------

target = np.random.default_rng(1).standard_normal(8)
p = tensor(np.zeros(8), requires_grad=True)
opt = AdamW([p], lr=0.05, weight_decay=0.0)
for step in range(300):
    opt.zero_grad()
    mse(p, tensor(target)).backward()
    opt.step()
print("recovered target within", float(np.abs(p.data - target).max()))
