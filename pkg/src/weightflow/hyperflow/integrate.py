"""Fixed-step explicit integrators for the weight ODE and the path-controlled CDE.

Gradients are taken by differentiating through the solver steps, so every
intermediate state stays on the active tape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import numcore as nc
from ..errors import ConfigError, NumericError
from ..numcore import Tensor

Field = Callable[[Tensor, float], Tensor]


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    steps_per_unit: int = 20

    def __post_init__(self):
        if self.method not in ("euler", "rk4"):
            raise ConfigError(f"unknown solver {self.method!r}; use euler or rk4")
        if self.steps_per_unit < 1:
            raise ConfigError("steps_per_unit must be >= 1")

    def n_steps(self, span: float) -> int:
        return max(1, math.ceil(self.steps_per_unit * span - 1e-9))


@dataclass
class StepRecord:
    t: float
    dt: float
    velocity: Tensor   # effective d(theta)/dt over the step


@dataclass
class Solution:
    theta: Tensor
    steps: list[StepRecord] = field(default_factory=list)
    states: list[Tensor] = field(default_factory=list)   # state after each step
    checkpoints: list[Tensor] = field(default_factory=list)


def _step(f: Field, y: Tensor, t: float, h: float, method: str) -> Tensor:
    if method == "euler":
        return f(y, t)
    k1 = f(y, t)
    k2 = f(nc.axpy(y, k1, h / 2), t + h / 2)
    k3 = f(nc.axpy(y, k2, h / 2), t + h / 2)
    k4 = f(nc.axpy(y, k3, h), t + h)
    return nc.lincomb([k1, k2, k3, k4], [1 / 6, 2 / 6, 2 / 6, 1 / 6])


def integrate(f: Field, theta0, t0: float, t1: float, solver: SolverConfig,
              sol: Solution | None = None) -> Solution:
    """Integrate ``d theta/dt = f(theta, t)`` from t0 to t1, appending to ``sol``."""
    if t1 < t0:
        raise ConfigError(f"t1={t1} precedes t0={t0}")
    y = nc.as_tensor(theta0)
    sol = sol if sol is not None else Solution(y)
    if t1 == t0:
        sol.theta = y
        return sol
    n = solver.n_steps(t1 - t0)
    h = (t1 - t0) / n
    base = len(sol.steps)
    for k in range(n):
        t = t0 + k * h
        try:
            v = _step(f, y, t, h, solver.method)
            y = nc.axpy(y, v, h)
        except NumericError as exc:
            raise NumericError(f"non-finite state at solver step {base + k}: {exc}") from None
        sol.steps.append(StepRecord(t, h, v))
        sol.states.append(y)
    sol.theta = y
    return sol


def ode_field(net) -> Field:
    if net.m != 1:
        raise ConfigError("ODE mode uses a hypernetwork with m = 1")

    def f(theta, t):
        return nc.reshape(net.field(theta, t), (theta.shape[0],))

    return f


def cde_field(net, path) -> Field:
    def f(theta, t):
        zdot = np.asarray(path.derivative(t), dtype=np.float64).reshape(net.m, 1)
        if net.m == 1:
            return nc.mul(nc.reshape(net.field(theta, t), (theta.shape[0],)), float(zdot[0, 0]))
        return nc.reshape(nc.matmul(net.field(theta, t), zdot), (theta.shape[0],))

    return f


def integrate_ode(net, theta0, t0: float, t1: float, solver: SolverConfig = SolverConfig()) -> Solution:
    return integrate(ode_field(net), theta0, t0, t1, solver)


def integrate_cde(net, theta0, path, t0: float, t1: float,
                  solver: SolverConfig = SolverConfig()) -> Solution:
    return integrate(cde_field(net, path), theta0, t0, t1, solver)


def dense_output(f: Field, sol: Solution, query) -> np.ndarray:
    """Cubic Hermite interpolation of a finished (untracked) solution at ``query`` times.

    Uses the states at both ends of the step that contains each query and the
    field evaluated there, so step endpoints are reproduced exactly.
    """
    if not sol.steps:
        raise ConfigError("dense output needs at least one solver step")
    t_nodes = np.array([s.t for s in sol.steps] + [sol.steps[-1].t + sol.steps[-1].dt])
    y_nodes = [sol.checkpoints[0].data] + [y.data for y in sol.states]
    slopes: dict[int, np.ndarray] = {}

    def slope(k):
        if k not in slopes:
            slopes[k] = f(nc.Tensor(y_nodes[k]), float(t_nodes[k])).data
        return slopes[k]

    query = np.atleast_1d(np.asarray(query, dtype=np.float64))
    tol = 1e-12 * max(1.0, abs(t_nodes[-1]))
    if query.min() < t_nodes[0] - tol or query.max() > t_nodes[-1] + tol:
        raise ConfigError(f"query times must lie in [{t_nodes[0]}, {t_nodes[-1]}]")
    out = np.empty((len(query), len(y_nodes[0])))
    for q, tq in enumerate(query):
        hit = np.flatnonzero(np.abs(t_nodes - tq) <= tol)
        if len(hit):
            out[q] = y_nodes[hit[-1]]
            continue
        k = int(np.clip(np.searchsorted(t_nodes, tq, side="right") - 1, 0, len(t_nodes) - 2))
        h = t_nodes[k + 1] - t_nodes[k]
        u = (tq - t_nodes[k]) / h
        h00, h10 = 2 * u**3 - 3 * u**2 + 1, u**3 - 2 * u**2 + u
        h01, h11 = -2 * u**3 + 3 * u**2, u**3 - u**2
        out[q] = (h00 * y_nodes[k] + h10 * h * slope(k) + h01 * y_nodes[k + 1]
                  + h11 * h * slope(k + 1))
    return out


def rollout(f: Field, theta0, times, solver: SolverConfig) -> Solution:
    """Integrate through ``times`` in order; ``checkpoints[i]`` is theta at ``times[i]``."""
    times = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(times) < 0):
        raise ConfigError("rollout times must be non-decreasing")
    y = nc.as_tensor(theta0)
    sol = Solution(y, checkpoints=[y])
    for a, b in zip(times[:-1], times[1:]):
        integrate(f, sol.theta, float(a), float(b), solver, sol)
        sol.checkpoints.append(sol.theta)
    return sol
