"""Central-difference gradient verification.

This is the independent oracle for every differentiable operation in the
package: the analytic gradient from the tape is compared elementwise against
(f(p+eps) - f(p-eps)) / (2 eps).
"""

from __future__ import annotations

import numpy as np

from .tensor import NumericsError, Tensor


def grad_check(f, params, eps: float = 1e-5, max_elements=None, seed: int = 0) -> float:
    """Return max over elements of |analytic - numeric| / max(1, |numeric|).

    `f` must be a zero-argument callable returning a scalar Tensor built from
    `params`. When `max_elements` is given, a seeded random subset of that
    many coordinates per parameter is checked instead of every coordinate.
    """
    if not (0.0 < eps <= 1e-3):
        raise ValueError(f"eps must be in (0, 1e-3], got {eps}")
    params = list(params)
    for p in params:
        if not p.requires_grad:
            raise ValueError("grad_check parameters must require gradients")
        p.grad = None

    loss = f()
    if loss.size != 1:
        raise ValueError("grad_check needs a scalar-valued f")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    def eval_loss():
        value = f().item()
        if not np.isfinite(value):
            raise NumericsError("non-finite loss during finite differencing")
        return value

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_elements is not None and n > max_elements:
            coords = rng.choice(n, size=max_elements, replace=False)
        else:
            coords = range(n)
        aflat = a.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            hi = eval_loss()
            flat[i] = orig - eps
            lo = eval_loss()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    for p in params:
        p.grad = None
    return worst
