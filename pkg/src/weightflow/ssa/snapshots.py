"""Snapshot sets (empirical measures at observation times) and their file format.

File layout: a first line holding a JSON header, then a CSV body with columns
``time_index,sample_index,x_1..x_d``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from .gillespie import Trajectory

MAX_TABLE = 10 ** 6


@dataclass
class SnapshotSet:
    times: np.ndarray          # (N,)
    samples: np.ndarray        # (N, n, d) int64 (or float64 for continuous data)
    L: int
    meta: dict = field(default_factory=dict)

    @property
    def n_times(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    @property
    def d(self) -> int:
        return self.samples.shape[2]

    def at(self, i: int) -> np.ndarray:
        return self.samples[i]

    def subset(self, indices: Sequence[int]) -> "SnapshotSet":
        idx = list(indices)
        return SnapshotSet(self.times[idx], self.samples[idx], self.L, dict(self.meta))


def eval_grid(T: float = 10.0, points: int = 100) -> np.ndarray:
    return np.linspace(0.0, T, points)


def train_indices(grid_points: int, n_times: int) -> np.ndarray:
    """Equally spaced grid indices, first and last included (t=0 only when n_times=1)."""
    if n_times < 1 or n_times > grid_points:
        raise ConfigError(f"N_times must be in [1, {grid_points}], got {n_times}")
    if n_times == 1:
        return np.array([0])
    return np.round(np.linspace(0, grid_points - 1, n_times)).astype(int)


def make_snapshots(trajectories: Sequence[Trajectory], n_times: int, samples_per_time: int,
                   rng_seed: int, grid_points: int = 100, L: int | None = None,
                   meta: dict | None = None) -> tuple[SnapshotSet, SnapshotSet]:
    """Training snapshots at ``n_times`` equally spaced grid times, plus the full-grid set.

    At each time a fresh subset of ``samples_per_time`` trajectories is read off
    by piecewise-constant interpolation.
    """
    if len(trajectories) < samples_per_time:
        raise ConfigError(f"need at least {samples_per_time} trajectories, got {len(trajectories)}")
    if samples_per_time < 1:
        raise ConfigError("samples_per_time must be >= 1")
    T = trajectories[0].T
    if any(tr.T != T for tr in trajectories):
        raise ConfigError("trajectories must share a time horizon")
    grid = eval_grid(T, grid_points)
    tidx = train_indices(grid_points, n_times)
    d = trajectories[0].states.shape[1]
    if L is None:
        L = int(max(tr.states.max() for tr in trajectories)) + 1
    rng = np.random.default_rng(rng_seed)
    full = np.empty((grid_points, samples_per_time, d), dtype=np.int64)
    # states[k, j] = trajectory j at grid time k
    states = np.stack([tr.state_at(grid) for tr in trajectories], axis=1)
    for k in range(grid_points):
        pick = np.sort(rng.choice(len(trajectories), size=samples_per_time, replace=False))
        full[k] = states[k, pick]
    info = dict(meta or {})
    eval_set = SnapshotSet(grid, full, L, {**info, "role": "eval"})
    train_set = SnapshotSet(grid[tidx], full[tidx], L, {**info, "role": "train",
                                                        "grid_index": tidx.tolist()})
    return train_set, eval_set


def _flat_index(samples: np.ndarray, L: int) -> np.ndarray:
    d = samples.shape[1]
    weights = L ** np.arange(d - 1, -1, -1)
    return samples.astype(np.int64) @ weights


def empirical_joint(samples: np.ndarray, L: int) -> np.ndarray:
    """Normalized histogram over [0, L-1]^d, shaped (L,)*d."""
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    d = samples.shape[1]
    if L ** d > MAX_TABLE:
        raise ConfigError(f"L^d = {L}^{d} exceeds {MAX_TABLE}; use sample-based metrics")
    if np.any(samples < 0) or np.any(samples > L - 1):
        raise ConfigError("samples outside [0, L-1]")
    counts = np.bincount(_flat_index(samples, L), minlength=L ** d).astype(np.float64)
    return (counts / counts.sum()).reshape((L,) * d)


def save_snapshots(path: str | Path, snap: SnapshotSet, header_extra: dict | None = None) -> None:
    header = {"d": snap.d, "L": snap.L, "times": [float(t) for t in snap.times], "n": snap.n,
              **snap.meta, **(header_extra or {})}
    buf = io.StringIO()
    buf.write(json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_index", "sample_index"] + [f"x_{k + 1}" for k in range(snap.d)])
    for i in range(snap.n_times):
        for j in range(snap.n):
            w.writerow([i, j, *snap.samples[i, j].tolist()])
    Path(path).write_text(buf.getvalue())


def load_snapshots(path: str | Path) -> SnapshotSet:
    text = Path(path).read_text()
    head, _, body = text.partition("\n")
    header = json.loads(head)
    rows = np.loadtxt(io.StringIO(body), delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    N, n, d = len(header["times"]), header["n"], header["d"]
    samples = np.zeros((N, n, d), dtype=np.int64)
    samples[rows[:, 0], rows[:, 1]] = rows[:, 2:]
    meta = {k: v for k, v in header.items() if k not in ("d", "L", "times", "n")}
    return SnapshotSet(np.array(header["times"], dtype=np.float64), samples, header["L"], meta)
