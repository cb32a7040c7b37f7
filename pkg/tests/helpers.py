"""Shared test utilities: finite-difference gradient checks and small fixtures."""
from __future__ import annotations

import numpy as np

from weightflow import numcore as nc


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def numeric_grad(f, x: np.ndarray, eps: float = 1e-5, coords=None) -> np.ndarray:
    """Central differences of the scalar function ``f`` at ``x`` (optionally only at ``coords``)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in (range(flat.size) if coords is None else coords):
        old = flat[i]
        flat[i] = old + eps
        up = f(x)
        flat[i] = old - eps
        down = f(x)
        flat[i] = old
        gf[i] = (up - down) / (2 * eps)
    return g


def check_param_grads(loss_fn, params, eps: float = 1e-5, max_coords: int | None = None,
                      rng: np.random.Generator | None = None) -> float:
    """Worst relative error between tape gradients and central differences over ``params``.

    ``loss_fn()`` must build the loss from the current ``param.data``.
    """
    for p in params:
        p.zero_grad()
    with nc.Tape() as tape:
        loss = loss_fn()
    grads = tape.backward(loss, accumulate=False)
    worst = 0.0
    for p in params:
        analytic = grads.get(p, np.zeros_like(p.data))
        coords = None
        if max_coords is not None and p.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(p.size, max_coords, replace=False)

        def f(x, p=p):
            saved = p.data
            p.data = x
            try:
                return loss_fn().item()
            finally:
                p.data = saved

        num = numeric_grad(f, p.data, eps, coords)
        if coords is not None:
            analytic = analytic.reshape(-1)[coords]
            num = num.reshape(-1)[coords]
        worst = max(worst, rel_err(analytic, num))
    return worst


def tv(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.ravel(p) - np.ravel(q)).sum())
