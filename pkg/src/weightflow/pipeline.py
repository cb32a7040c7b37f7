"""Run configuration and the in-memory stages shared by the CLI and the test-suite."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .backbone import BackboneConfig
from .errors import ConfigError
from .hyperflow import Autoencoder, LatentPath, SolverConfig, build_spline, fit_autoencoder
from .seeding import subseed
from .ssa import BUILTIN, SnapshotSet, builtin_system, make_snapshots, simulate_many
from .train import (AnchorSet, EvalReport, HypernetResult, TimeMap, TrainConfig, evaluate,
                    pretrain_anchors, train_hypernet)

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    system: str = "birth_death"
    d: int = 0                    # 0: take it from the system
    L: int = 0                    # 0: take it from the system
    H: int = 8
    head: str = "categorical"
    K: int = 5
    order: tuple[int, ...] | None = None
    n_times: int = 10
    n_trajectories: int = 1000
    samples_per_time: int = 1000
    T: float = 10.0
    grid_points: int = 100
    seed: int = 0
    eval_samples: int = 2000
    mmd_cap: int = 500
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "run"

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if self.order is not None:
            self.order = tuple(int(i) for i in self.order)
        self.validate()

    def validate(self) -> None:
        if self.system not in BUILTIN:
            raise ConfigError(f"unknown system {self.system!r}; available: {', '.join(sorted(BUILTIN))}")
        sys_ = builtin_system(self.system)
        if self.d and self.d != sys_.d:
            raise ConfigError(f"system {self.system} has d={sys_.d}, config says d={self.d}")
        if self.L and self.L < sys_.L:
            raise ConfigError(f"L={self.L} is smaller than the system's lattice size {sys_.L}")
        if self.n_trajectories < 1:
            raise ConfigError("n_trajectories must be >= 1")
        if not 1 <= self.samples_per_time <= self.n_trajectories:
            raise ConfigError("samples_per_time must be in [1, n_trajectories]")
        if not 2 <= self.n_times <= self.grid_points:
            raise ConfigError("n_times must be in [2, grid_points]")
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if self.eval_samples < 2 or self.mmd_cap < 2:
            raise ConfigError("eval_samples and mmd_cap must be >= 2")
        if self.head != "categorical":
            raise ConfigError("reaction-system data is discrete; use the categorical head")
        self.backbone  # validates H, K, order

    @property
    def lattice(self) -> int:
        return self.L or builtin_system(self.system).L

    @property
    def backbone(self) -> BackboneConfig:
        sys_ = builtin_system(self.system)
        return BackboneConfig(d=sys_.d, L=self.lattice, H=self.H, order=self.order, head=self.head,
                              K=self.K)

    def train_config(self) -> TrainConfig:
        """The stage config with the run's root seed."""
        return dataclasses.replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["order"] = list(self.order) if self.order is not None else None
        return out

    def hash_dict(self) -> dict:
        out = self.to_dict()
        out.pop("out_dir")
        return out

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hash_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        train = dict(d.pop("train", {}) or {})
        if isinstance(train.get("solver"), dict):
            train["solver"] = SolverConfig(**train["solver"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown run config keys: {', '.join(sorted(unknown))}")
        return cls(**d, train=TrainConfig(**train))


def simulate_data(rc: RunConfig) -> tuple[SnapshotSet, SnapshotSet]:
    system = builtin_system(rc.system)
    trajs = simulate_many(system, rc.n_trajectories, rc.T, seed=subseed(rc.seed, "simulate", 0))
    meta = {"system": rc.system, "T": rc.T, "n_trajectories": rc.n_trajectories, "seed": rc.seed,
            "rates": dict(system.rates), "x0": system.x0.tolist()}
    return make_snapshots(trajs, rc.n_times, rc.samples_per_time, subseed(rc.seed, "simulate", 1),
                          rc.grid_points, L=rc.lattice, meta=meta)


def pretrain(rc: RunConfig, train_set: SnapshotSet) -> AnchorSet:
    return pretrain_anchors(train_set, rc.backbone, rc.train_config())


@dataclass
class LatentFit:
    autoencoder: Autoencoder
    latents: np.ndarray
    path: LatentPath
    time_map: TimeMap


def fit_latent_path(rc: RunConfig, anchors: AnchorSet) -> LatentFit:
    tc = rc.train
    ae, z = fit_autoencoder(anchors.thetas, tc.m, tc.ae_epochs, subseed(rc.seed, "init", 2),
                            tc.ae_lr, tc.ae_hidden)
    tm = TimeMap.from_times(anchors.times)
    return LatentFit(ae, z, build_spline(tm(anchors.times), z), tm)


def train_flow(rc: RunConfig, anchors: AnchorSet, latent: LatentFit | None, mode: str,
               callback=None) -> HypernetResult:
    tc = dataclasses.replace(rc.train_config(), mode=mode)
    if mode == "cde" and latent is None:
        raise ConfigError("CDE training needs the fitted latent path")
    return train_hypernet(anchors, latent.path if mode == "cde" else None, tc, callback=callback)


def evaluate_mode(rc: RunConfig, mode: str, eval_set: SnapshotSet, anchors: AnchorSet,
                  flow: HypernetResult | None = None, metrics=("W", "JSD", "MMD")) -> EvalReport:
    rep = evaluate(mode, eval_set, anchors, flow, rc.train.solver, metrics, rc.eval_samples,
                   rc.mmd_cap, seed=subseed(rc.seed, "eval"))
    rep.meta["config_hash"] = rc.config_hash
    return rep
