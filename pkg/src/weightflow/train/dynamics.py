"""Stage two: learn the hypernetwork flow that carries the first anchor through the others."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import numcore as nc
from ..backbone import BackboneConfig, log_prob_tensor, sample
from ..errors import ConfigError, NumericError
from ..hyperflow import (Hypernet, LatentPath, Solution, SolverConfig, cde_field, dense_output,
                         ode_field, rollout)
from ..numcore import Tensor
from ..seeding import rng as named_rng, subseed
from .anchors import AnchorSet
from .config import TrainConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeMap:
    """Affine map from observation time to the unit interval the flow runs on."""

    t0: float
    t1: float

    def __call__(self, t):
        return (np.asarray(t, dtype=np.float64) - self.t0) / (self.t1 - self.t0)

    @classmethod
    def from_times(cls, times) -> "TimeMap":
        times = np.asarray(times, dtype=np.float64)
        if times[-1] <= times[0]:
            raise ConfigError("observation times must span a positive interval")
        return cls(float(times[0]), float(times[-1]))


class TrainingDiverged(NumericError):
    """Raised with the net restored to its last finite weights; ``result`` holds the run so far."""

    def __init__(self, msg: str, net: Hypernet, epoch: int, result: "HypernetResult | None" = None):
        super().__init__(msg)
        self.net = net
        self.epoch = epoch
        self.result = result


def kinetic_energy(sol: Solution) -> Tensor:
    """Sum over solver steps of ||d theta/dt||^2 * dt."""
    if not sol.steps:
        raise ConfigError("path energy needs a trajectory with at least one step")
    terms = [nc.sum(nc.square(s.velocity)) for s in sol.steps]
    return nc.lincomb(terms, [s.dt for s in sol.steps])


def score_term(theta, config: BackboneConfig, n: int, rng: np.random.Generator) -> Tensor:
    """E_x ||grad log p(x)||^2 with the gradient replaced by forward differences to the
    neighbouring lattice state (backward difference on the upper boundary)."""
    if config.head != "categorical":
        raise ConfigError("the discrete score term needs a categorical head")
    theta = nc.as_tensor(theta)
    x = sample(theta.data, config, n, rng)
    base = log_prob_tensor(theta, config, x)
    total = None
    for j in range(config.d):
        step = np.where(x[:, j] < config.L - 1, 1, -1)
        y = x.copy()
        y[:, j] += step
        diff = log_prob_tensor(theta, config, y) - base
        sq = nc.mean(nc.square(diff))
        total = sq if total is None else total + sq
    return total


def path_energy(sol: Solution, sigma: float = 0.0, config: BackboneConfig | None = None,
                n_samples: int = 64, rng: np.random.Generator | None = None,
                time_scale: float = 1.0) -> Tensor:
    """Weight-space kinetic energy, plus (sigma^4 / 8) * time-integrated score term when sigma > 0.

    ``time_scale`` is the length of one solver time unit in physical time; the
    kinetic part scales as 1/time_scale and the score integral as time_scale.
    """
    if time_scale <= 0:
        raise ConfigError("time_scale must be positive")
    energy = kinetic_energy(sol)
    if time_scale != 1.0:
        energy = energy * (1.0 / time_scale)
    if sigma > 0:
        if config is None:
            raise ConfigError("score term needs the backbone config")
        rng = rng if rng is not None else np.random.default_rng(0)
        terms = [score_term(state, config, n_samples, rng) for state in sol.states]
        score = nc.lincomb(terms, [s.dt for s in sol.steps])
        energy = energy + score * (time_scale * sigma ** 4 / 8.0)
    return energy


@dataclass
class HypernetResult:
    net: Hypernet
    time_map: TimeMap
    mode: str
    path: LatentPath | None
    knots: np.ndarray                      # normalized anchor times the flow was fit through
    history: list[dict] = field(default_factory=list)

    def field_fn(self):
        return cde_field(self.net, self.path) if self.mode == "cde" else ode_field(self.net)

    def roll(self, anchor0: np.ndarray, times, solver: SolverConfig) -> np.ndarray:
        """Weights at each time in ``times`` (no gradient tracking).

        The solver steps exactly as in training (through the anchor knots), and
        times in between are read off by Hermite dense output.
        """
        s = self.time_map(times)
        if np.any(s < -1e-12):
            raise ConfigError("cannot roll the flow back before the first anchor")
        knots = self.knots
        if s.max() > knots[-1]:
            knots = np.append(knots, s.max())
        f = self.field_fn()
        sol = rollout(f, anchor0, knots, solver)
        return dense_output(f, sol, np.clip(s, 0.0, None))


def scheduled_lr(train: TrainConfig, epoch: int) -> float:
    if train.lr_schedule == "constant" or train.hypernet_epochs == 1:
        return train.hypernet_lr
    frac = epoch / (train.hypernet_epochs - 1)
    scale = train.lr_floor + (1 - train.lr_floor) * 0.5 * (1 + np.cos(np.pi * frac))
    return train.hypernet_lr * scale


def clip_gradients(params, max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``; returns the norm."""
    norm = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))
    if max_norm > 0 and norm > max_norm:
        for p in params:
            p.grad *= max_norm / norm
    return norm


def reconstruction_loss(sol: Solution, targets: np.ndarray) -> Tensor:
    """(1/N) sum_i ||theta(t_i) - theta_hat_i||^2."""
    terms = [nc.sum(nc.square(cp - tgt)) for cp, tgt in zip(sol.checkpoints, targets)]
    return nc.lincomb(terms, [1.0 / len(targets)] * len(targets))


def build_hypernet(anchors: AnchorSet, train: TrainConfig) -> Hypernet:
    m = train.m if train.mode == "cde" else 1
    net = Hypernet(anchors.config.layout, m=m, d_model=train.d_model, heads=train.heads,
                   d_time=train.d_time, d_ff=train.d_ff,
                   seed=subseed(train.seed, "init", 1))
    if train.normalize_field:
        net.set_normalization(anchors.thetas)
    return net


def train_hypernet(anchors: AnchorSet, path: LatentPath | None, train: TrainConfig,
                   net: Hypernet | None = None, callback=None) -> HypernetResult:
    """Minimize reconstruction + lam * energy with Adam, rolling from the first anchor."""
    if anchors.n < 2:
        raise ConfigError("need at least two anchors")
    tm = TimeMap.from_times(anchors.times)
    s = tm(anchors.times)
    if train.mode == "cde":
        if path is None:
            raise ConfigError("CDE mode needs a latent path")
        if len(path.times) != anchors.n or not np.allclose(path.times, s):
            raise ConfigError("latent path knots must sit at the (normalized) anchor times")
    net = net if net is not None else build_hypernet(anchors, train)
    res = HypernetResult(net, tm, train.mode, path if train.mode == "cde" else None, s)
    span = tm.t1 - tm.t0
    f = res.field_fn()
    theta0 = anchors.thetas[0]
    opt = nc.Adam(net.params(), lr=train.hypernet_lr)
    score_rng = named_rng(train.seed, "train", 1)
    last_good = net.get_flat()
    for epoch in range(train.hypernet_epochs):
        opt.zero_grad()
        try:
            with nc.Tape() as tape:
                sol = rollout(f, theta0, s, train.solver)
                recon = reconstruction_loss(sol, anchors.thetas)
                energy = path_energy(sol, train.sigma, anchors.config, train.score_samples, score_rng,
                                     time_scale=span)
                loss = recon + energy * train.lam
            tape.backward(loss)
            grads_ok = all(np.isfinite(p.grad).all() for p in net.params())
        except NumericError as exc:
            grads_ok, exc_msg = False, str(exc)
        else:
            exc_msg = "non-finite gradient"
        if not grads_ok:
            net.set_flat(last_good)
            raise TrainingDiverged(f"hypernetwork training diverged at epoch {epoch}: {exc_msg}",
                                   net, epoch, res)
        last_good = net.get_flat()
        gnorm = clip_gradients(net.params(), train.grad_clip)
        opt.lr = float(scheduled_lr(train, epoch))
        rec = {"epoch": epoch, "loss": loss.item(), "recon": recon.item(), "energy": energy.item(),
               "grad_norm": gnorm, "lr": float(opt.lr)}
        res.history.append(rec)
        if callback is not None:
            callback(rec)
        opt.step()
    return res
