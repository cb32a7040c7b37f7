"""Stage one: fit one backbone per observation time (the anchors)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import numcore as nc
from ..backbone import BackboneConfig, compress_batch, init_weights, nll
from ..errors import ConfigError, NumericError
from ..seeding import substream
from ..ssa import SnapshotSet
from .config import TrainConfig

log = logging.getLogger(__name__)


@dataclass
class AnchorSet:
    times: np.ndarray        # (N,)
    thetas: np.ndarray       # (N, P)
    nll: np.ndarray          # (N,) final training NLL
    config: BackboneConfig
    history: list[list[float]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.times)

    def nearest(self, t: float) -> int:
        """Index of the anchor closest in time (earlier one on ties)."""
        return int(np.argmin(np.abs(self.times - t)))


def fit_backbone(theta0: np.ndarray, config: BackboneConfig, data: np.ndarray, epochs: int,
                 lr: float, batch_size: int = 0, rng: np.random.Generator | None = None,
                 tag: str = "") -> tuple[np.ndarray, list[float]]:
    """Adam on the mean NLL of ``data``; returns final weights and the loss curve."""
    theta = nc.Param(theta0, "theta")
    opt = nc.Adam([theta], lr=lr)
    full = compress_batch(data) if config.head == "categorical" else (data, None)
    losses = []
    for epoch in range(epochs):
        if batch_size and batch_size < len(data):
            pick = rng.choice(len(data), size=batch_size, replace=False)
            batch, weights = (compress_batch(data[pick]) if config.head == "categorical"
                              else (data[pick], None))
        else:
            batch, weights = full
        opt.zero_grad()
        try:
            with nc.Tape() as tape:
                loss = nll(theta, config, batch, weights)
            tape.backward(loss)
        except NumericError as exc:
            raise NumericError(f"{tag} epoch {epoch}: NLL became non-finite ({exc}); "
                               f"last loss {losses[-1] if losses else 'n/a'}") from None
        losses.append(loss.item())
        opt.step()
    final = nll(theta.data, config, *full).item()
    losses.append(final)
    return theta.data.copy(), losses


def pretrain_anchors(snapshots: SnapshotSet, config: BackboneConfig, train: TrainConfig,
                     seed_stream: np.random.SeedSequence | None = None) -> AnchorSet:
    """Fit anchors in time order, warm-starting each from the previous one when aligning."""
    if snapshots.n_times < 2:
        raise ConfigError("need at least two snapshot times")
    ss = seed_stream if seed_stream is not None else substream(train.seed, "init")
    init_seeds = ss.spawn(snapshots.n_times)
    rng = np.random.default_rng(substream(train.seed, "train", 0))
    thetas, nlls, hist = [], [], []
    prev = None
    for i in range(snapshots.n_times):
        if train.sequential_aligning and prev is not None:
            start = prev
        else:
            start = init_weights(config, int(init_seeds[i].generate_state(1)[0])).theta
        theta, losses = fit_backbone(start, config, snapshots.at(i), train.anchor_epochs,
                                     train.anchor_lr, train.batch_size, rng, tag=f"anchor {i}")
        log.info("anchor %d/%d t=%.3f nll=%.4f", i + 1, snapshots.n_times, snapshots.times[i], losses[-1])
        thetas.append(theta)
        nlls.append(losses[-1])
        hist.append(losses)
        prev = theta
    return AnchorSet(np.asarray(snapshots.times, dtype=np.float64), np.stack(thetas),
                     np.array(nlls), config, hist)
