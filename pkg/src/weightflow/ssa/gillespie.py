"""Exact stochastic simulation (Gillespie direct method).

The event loop lives in a compiled kernel when it is available and in
``_ssa_py`` otherwise.  Both consume the same stream of uniforms drawn from
a per-trajectory ``numpy`` generator, so the two backends produce
bit-identical trajectories.  Set ``WEIGHTFLOW_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from . import _ssa_py
from .systems import ReactionSystem

if os.environ.get("WEIGHTFLOW_PURE_PYTHON") == "1":
    _kernel = _ssa_py
    BACKEND = "python"
else:
    try:
        from . import _ssa_kernel as _kernel
        BACKEND = "cython"
    except ImportError:  # extension not built
        _kernel = _ssa_py
        BACKEND = "python"

_CHUNK = 512


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("cython"/"python"; default: active backend)."""
    if name is None:
        return _kernel
    if name == "python":
        return _ssa_py
    if name == "cython":
        from . import _ssa_kernel
        return _ssa_kernel
    raise ConfigError(f"unknown SSA backend {name!r}")


@dataclass
class Trajectory:
    times: np.ndarray   # (E+1,) starting at 0
    states: np.ndarray  # (E+1, d) int64
    T: float

    def state_at(self, t) -> np.ndarray:
        """Piecewise-constant (right-continuous) state at time(s) ``t``."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side="right") - 1
        return self.states[idx]

    @property
    def n_events(self) -> int:
        return len(self.times) - 1


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run(system: ReactionSystem, x0, T: float, rng: np.random.Generator, record: bool, kernel):
    stoich = np.ascontiguousarray(system.stoichiometry, dtype=np.int64)
    kinds, params = system.kernel_tables()
    x = np.array(x0, dtype=np.int64).reshape(system.d)
    t = 0.0
    cap = 256 if record else 0
    out_t = np.empty(cap)
    out_x = np.empty((cap, system.d), dtype=np.int64)
    n_out = 0
    uniforms = rng.random(_CHUNK)
    u_pos = 0
    while True:
        t, u_pos, n_out, status = kernel.run_chunk(stoich, kinds, params, system.L, x, t, T,
                                                   uniforms, u_pos, out_t, out_x, n_out, record)
        if status == _ssa_py.DONE:
            break
        if status == _ssa_py.NEED_UNIFORMS:
            uniforms = np.concatenate([uniforms[u_pos:], rng.random(_CHUNK)])
            u_pos = 0
        else:
            cap *= 2
            out_t = np.resize(out_t, cap)
            out_x = np.resize(out_x, (cap, system.d))
    return x, out_t[:n_out], out_x[:n_out]


def gillespie_simulate(system: ReactionSystem, x0=None, T: float = 10.0, rng_seed: int = 0,
                       index: int = 0, backend: str | None = None) -> Trajectory:
    """One exact SSA trajectory on [0, T] from ``x0`` (default: the system's own)."""
    if T <= 0:
        raise ConfigError("T must be positive")
    x0 = system.x0 if x0 is None else np.asarray(x0, dtype=np.int64)
    if not system.in_bounds(x0):
        raise ConfigError(f"x0={list(x0)} outside [0, {system.L - 1}]^{system.d}")
    _, ts, xs = _run(system, x0, T, trajectory_rng(rng_seed, index), True, get_backend(backend))
    times = np.concatenate([[0.0], ts])
    states = np.concatenate([np.asarray(x0, dtype=np.int64).reshape(1, -1), xs])
    return Trajectory(times, states, T)


def simulate_many(system: ReactionSystem, n: int, T: float = 10.0, seed: int = 0, x0=None,
                  workers: int = 1, backend: str | None = None) -> list[Trajectory]:
    """``n`` independent trajectories; trajectory ``i`` uses the stream ``(seed, i)``."""
    if n < 0:
        raise ConfigError("trajectory count must be non-negative")

    def one(i):
        return gillespie_simulate(system, x0, T, seed, index=i, backend=backend)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(n)))
    return [one(i) for i in range(n)]


def simulate_final_states(system: ReactionSystem, n: int, T: float, seed: int = 0, x0=None,
                          backend: str | None = None) -> np.ndarray:
    """States at time ``T`` of ``n`` independent runs, without recording events."""
    x0 = system.x0 if x0 is None else np.asarray(x0, dtype=np.int64)
    if not system.in_bounds(x0):
        raise ConfigError("x0 out of bounds")
    kernel = get_backend(backend)
    out = np.empty((n, system.d), dtype=np.int64)
    for i in range(n):
        out[i], _, _ = _run(system, x0, T, trajectory_rng(seed, i), False, kernel)
    return out
