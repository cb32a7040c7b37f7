"""Natural cubic spline through latent knots, with analytic derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                      rhs: np.ndarray) -> np.ndarray:
    """Thomas algorithm; ``rhs`` may carry extra trailing columns solved together."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros_like(rhs, dtype=np.float64)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i - 1] * c[i - 1]
        if i < n - 1:
            c[i] = upper[i] / denom
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom
    x = np.zeros_like(d)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


@dataclass
class LatentPath:
    times: np.ndarray     # (N,)
    knots: np.ndarray     # (N, m)
    second: np.ndarray    # (N, m) second derivatives at the knots

    @property
    def m(self) -> int:
        return self.knots.shape[1]

    def _locate(self, t: float) -> tuple[int, float, float]:
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        h = self.times[i + 1] - self.times[i]
        return i, h, t - self.times[i]

    def _end_slope(self, left: bool) -> np.ndarray:
        return self.derivative(self.times[0] if left else self.times[-1])

    def evaluate(self, t: float) -> np.ndarray:
        t = float(t)
        if t < self.times[0]:
            return self.knots[0] + (t - self.times[0]) * self._end_slope(True)
        if t > self.times[-1]:
            return self.knots[-1] + (t - self.times[-1]) * self._end_slope(False)
        i, h, s = self._locate(t)
        z0, z1, M0, M1 = self.knots[i], self.knots[i + 1], self.second[i], self.second[i + 1]
        a = h - s
        return (M0 * a ** 3 + M1 * s ** 3) / (6 * h) + (z0 / h - M0 * h / 6) * a + (z1 / h - M1 * h / 6) * s

    def derivative(self, t: float) -> np.ndarray:
        """dZ/dt; outside the knot range the endpoint slope is held constant."""
        t = float(np.clip(t, self.times[0], self.times[-1]))
        i, h, s = self._locate(t)
        z0, z1, M0, M1 = self.knots[i], self.knots[i + 1], self.second[i], self.second[i + 1]
        a = h - s
        return (-M0 * a ** 2 + M1 * s ** 2) / (2 * h) + (z1 - z0) / h - (M1 - M0) * h / 6

    def second_derivative(self, t: float) -> np.ndarray:
        t = float(t)
        if t < self.times[0] or t > self.times[-1]:
            return np.zeros(self.m)
        i, h, s = self._locate(t)
        return (self.second[i] * (h - s) + self.second[i + 1] * s) / h


def build_spline(times, latents) -> LatentPath:
    times = np.asarray(times, dtype=np.float64)
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if len(times) < 2 or len(times) != len(z):
        raise ConfigError("need at least two knots with one latent each")
    if np.any(np.diff(times) <= 0):
        raise ConfigError("knot times must be strictly increasing")
    N = len(times)
    M = np.zeros_like(z)
    if N > 2:
        h = np.diff(times)
        rhs = 6 * ((z[2:] - z[1:-1]) / h[1:, None] - (z[1:-1] - z[:-2]) / h[:-1, None])
        M[1:-1] = solve_tridiagonal(h[1:-1], 2 * (h[:-1] + h[1:]), h[1:-1], rhs)
    return LatentPath(times, z, M)


def spline_deriv(path: LatentPath, t: float) -> np.ndarray:
    return path.derivative(t)
