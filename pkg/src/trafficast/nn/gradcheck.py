"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable

import numpy as np


def numerical_gradient(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place and restoring it."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + eps
        fp = f()
        flat[j] = old - eps
        fm = f()
        flat[j] = old
        gflat[j] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|)``; 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(model, x: np.ndarray, rng: np.random.Generator, eps: float = 1e-5) -> dict[str, float]:
    """Compare backward() against finite differences for every parameter and the input.

    ``model`` is any object with ``forward``, ``backward``, ``params`` and
    ``grads`` (a layer) or ``named_params``/``named_grads`` (a Sequential).
    The scalar checked is ``sum(forward(x) * R)`` for a fixed random ``R``.
    """
    x = np.array(x, dtype=np.float64)
    y = model.forward(x)
    proj = rng.standard_normal(y.shape)
    dx = model.backward(proj)
    if hasattr(model, "named_params"):
        params, grads = model.named_params(), model.named_grads()
    else:
        params, grads = model.params, model.grads
    grads = {k: g.copy() for k, g in grads.items()}

    def loss():
        return float(np.sum(model.forward(x) * proj))

    errors = {name: relative_error(grads[name], numerical_gradient(loss, p, eps)) for name, p in params.items()}
    errors["input"] = relative_error(dx, numerical_gradient(loss, x, eps))
    return errors
