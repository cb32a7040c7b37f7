"""Evaluation on the fine time grid, for the learned flow and the nearest-anchor baseline."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..backbone import enumerate_joint, sample
from ..errors import ConfigError
from ..hyperflow import SolverConfig
from ..ssa import SnapshotSet, empirical_joint
from ..ssa.snapshots import MAX_TABLE
from .anchors import AnchorSet
from .dynamics import HypernetResult
from .metrics import metric_jsd, metric_mmd, metric_wasserstein

log = logging.getLogger(__name__)

MODES = ("weightflow_ode", "weightflow_cde", "nearest_anchor")
METRICS = ("W", "JSD", "MMD")


@dataclass
class EvalReport:
    mode: str
    times: np.ndarray
    values: dict[str, np.ndarray]          # metric name -> (T,)
    meta: dict = field(default_factory=dict)

    @property
    def averages(self) -> dict[str, float]:
        return {k: float(np.mean(v)) for k, v in self.values.items()}

    def compare(self, baseline: "EvalReport") -> dict[str, float]:
        """Ratio of this report's averages to ``baseline``'s (lower is better)."""
        out = {}
        for k, v in self.averages.items():
            b = baseline.averages.get(k)
            if b is not None:
                out[k] = v / b if b > 0 else float("inf") if v > 0 else 1.0
        return out

    def rows(self):
        for i, t in enumerate(self.times):
            for k in self.values:
                yield {"time": float(t), "mode": self.mode, "metric": k,
                       "value": float(self.values[k][i])}

    def to_json(self) -> dict:
        return {"mode": self.mode, "averages": self.averages, **self.meta}


def write_reports(reports: list[EvalReport], directory: str | Path, extra: dict | None = None) -> None:
    """``eval.csv`` (one row per time x mode x metric) and ``eval_summary.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "eval.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["time", "mode", "metric", "value"], lineterminator="\n")
        w.writeheader()
        for rep in reports:
            for row in rep.rows():
                w.writerow({**row, "time": repr(row["time"]), "value": repr(row["value"])})
    summary = {"modes": {r.mode: r.to_json() for r in reports}, **(extra or {})}
    if "nearest_anchor" in summary["modes"]:
        base = next(r for r in reports if r.mode == "nearest_anchor")
        for r in reports:
            if r is not base:
                summary["modes"][r.mode]["ratio_to_nearest_anchor"] = r.compare(base)
    (directory / "eval_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def weights_on_grid(mode: str, times: np.ndarray, anchors: AnchorSet,
                    flow: HypernetResult | None = None,
                    solver: SolverConfig = SolverConfig()) -> np.ndarray:
    """Backbone weights at every evaluation time, shape (T, P)."""
    if mode == "nearest_anchor":
        return anchors.thetas[[anchors.nearest(t) for t in times]]
    if mode not in MODES:
        raise ConfigError(f"unknown eval mode {mode!r}; choose from {', '.join(MODES)}")
    if flow is None:
        raise ConfigError(f"mode {mode} needs a trained hypernetwork")
    want = "cde" if mode == "weightflow_cde" else "ode"
    if flow.mode != want:
        raise ConfigError(f"mode {mode} needs a hypernetwork trained in {want} mode, got {flow.mode}")
    return flow.roll(anchors.thetas[0], times, solver)


def score_weights(theta: np.ndarray, anchors: AnchorSet, target: np.ndarray, rng: np.random.Generator,
                  metrics=METRICS, n_samples: int = 2000, mmd_cap: int = 500) -> dict[str, float]:
    """All requested metrics of one backbone against one snapshot of states."""
    cfg = anchors.config
    out = {}
    need_samples = any(k in metrics for k in ("W", "MMD"))
    enumerable = cfg.head == "categorical" and cfg.L ** cfg.d <= MAX_TABLE
    xs = sample(theta, cfg, n_samples, rng) if need_samples or not enumerable else None
    if "JSD" in metrics:
        if enumerable:
            out["JSD"] = metric_jsd(enumerate_joint(theta, cfg), empirical_joint(target, cfg.L))
        else:
            out["JSD"] = metric_jsd(empirical_joint(xs, cfg.L), empirical_joint(target, cfg.L))
    if "W" in metrics:
        out["W"] = metric_wasserstein(xs, target)
    if "MMD" in metrics:
        a = xs[rng.choice(len(xs), min(mmd_cap, len(xs)), replace=False)]
        b = target[rng.choice(len(target), min(mmd_cap, len(target)), replace=False)]
        # the unbiased estimator can dip below zero; the report keeps metrics non-negative
        out["MMD"] = max(0.0, metric_mmd(a, b))
    return out


def evaluate(mode: str, eval_set: SnapshotSet, anchors: AnchorSet, flow: HypernetResult | None = None,
             solver: SolverConfig = SolverConfig(), metrics=METRICS, n_samples: int = 2000,
             mmd_cap: int = 500, seed: int = 0) -> EvalReport:
    """Metrics at every grid time of ``eval_set`` for one mode."""
    for k in metrics:
        if k not in METRICS:
            raise ConfigError(f"unknown metric {k!r}")
    thetas = weights_on_grid(mode, eval_set.times, anchors, flow, solver)
    values = {k: np.empty(eval_set.n_times) for k in metrics}
    for i in range(eval_set.n_times):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        res = score_weights(thetas[i], anchors, eval_set.at(i), rng, metrics, n_samples, mmd_cap)
        for k, v in res.items():
            values[k][i] = v
    rep = EvalReport(mode, np.asarray(eval_set.times, dtype=np.float64), values,
                     {"seed": seed, "n_samples": n_samples})
    log.info("%s: %s", mode, ", ".join(f"{k}={v:.4g}" for k, v in rep.averages.items()))
    return rep
