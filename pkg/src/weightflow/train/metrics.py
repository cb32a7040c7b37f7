"""Distances between distributions: Wasserstein-1, Jensen-Shannon, MMD."""
from __future__ import annotations

import logging

import numpy as np

from ..errors import ConfigError

log = logging.getLogger(__name__)


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def wasserstein_1d(a, b) -> float:
    """Exact W1 between two empirical measures on the line: integral of |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    pts = np.concatenate([a, b])
    pts.sort(kind="mergesort")
    gaps = np.diff(pts)
    Fa = np.searchsorted(a, pts[:-1], side="right") / len(a)
    Fb = np.searchsorted(b, pts[:-1], side="right") / len(b)
    return float(np.sum(np.abs(Fa - Fb) * gaps))


def metric_wasserstein(samples_a, samples_b) -> float:
    """W1 for d = 1; for d > 1 the mean of the per-dimension exact W1."""
    a, b = _as_2d(samples_a), _as_2d(samples_b)
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if len(a) == 0 or len(b) == 0:
        raise ConfigError("empty sample set")
    return float(np.mean([wasserstein_1d(a[:, k], b[:, k]) for k in range(a.shape[1])]))


def _kl_to_mix(p: np.ndarray, m: np.ndarray) -> float:
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / m[nz])))


def metric_jsd(p_table, q_table) -> float:
    """Jensen-Shannon divergence in nats, with 0 log 0 = 0."""
    p = np.asarray(p_table, dtype=np.float64).ravel()
    q = np.asarray(q_table, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ConfigError(f"tables differ in support size: {p.size} vs {q.size}")
    for name, t in (("p", p), ("q", q)):
        if abs(t.sum() - 1.0) > 1e-6 or np.any(t < 0):
            raise ConfigError(f"{name} is not a normalized distribution (sum={t.sum():.8f})")
    m = 0.5 * (p + q)
    return max(0.0, 0.5 * _kl_to_mix(p, m) + 0.5 * _kl_to_mix(q, m))


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def median_bandwidth(a, b) -> tuple[float, bool]:
    """Median pairwise distance over the pooled set; (1.0, True) when it is zero."""
    pool = np.concatenate([_as_2d(a), _as_2d(b)])
    D = np.sqrt(_sqdist(pool, pool))
    iu = np.triu_indices(len(pool), k=1)
    med = float(np.median(D[iu])) if len(iu[0]) else 0.0
    if med <= 0.0:
        return 1.0, True
    return med, False


def mmd2_unbiased(a, b, bandwidth: float) -> float:
    a, b = _as_2d(a), _as_2d(b)
    g = 1.0 / (2.0 * bandwidth ** 2)
    Kaa = np.exp(-g * _sqdist(a, a))
    Kbb = np.exp(-g * _sqdist(b, b))
    Kab = np.exp(-g * _sqdist(a, b))
    n, m = len(a), len(b)
    taa = (Kaa.sum() - np.trace(Kaa)) / (n * (n - 1))
    tbb = (Kbb.sum() - np.trace(Kbb)) / (m * (m - 1))
    return float(taa + tbb - 2.0 * Kab.mean())


def metric_mmd(samples_a, samples_b, bandwidth: float | None = None) -> float:
    """Unbiased MMD^2 with an RBF kernel; bandwidth defaults to the pooled median distance.

    The estimator can dip slightly below zero when the two sets agree.
    """
    a, b = _as_2d(samples_a), _as_2d(samples_b)
    if len(a) < 2 or len(b) < 2:
        raise ConfigError("MMD needs at least two samples per set")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if bandwidth is None:
        bandwidth, degenerate = median_bandwidth(a, b)
        if degenerate:
            log.warning("MMD bandwidth degenerate (all pooled points identical); using 1.0")
    return mmd2_unbiased(a, b, bandwidth)
