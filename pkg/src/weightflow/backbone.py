"""Autoregressive GRU density network mapping a flat weight vector to a joint distribution.

Every linear layer is stored in the flat vector as a row-major
``(rows, D_in + 1)`` block whose last column is the bias (a layer without
bias stores ``(rows, D_in)``).  Layers:

* ``embed``  (H, L)          one-hot of the previous state; the start token is the
                              all-zero input, so its embedding is the learned bias.
                              MDN heads take the scalar previous value (D_in = 1).
* ``gru``    (3H, H + H + 1)  fused reset/update/candidate gates; input columns are
                              ``[embedding | hidden | 1]`` and the extra hidden-side
                              column is the candidate bias inside the reset product.
* ``head``   (L, H) or (3K, H) logits, or MDN (weight logits, means, log-stds).

None of the shapes depend on the number of dimensions ``d``: the recurrence
carries position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import numcore as nc
from .errors import ConfigError
from .numcore import Tensor

LOGIT_CLAMP = 30.0
LOG_STD_MIN, LOG_STD_MAX = math.log(1e-3), math.log(1e3)
MAX_TABLE = 10 ** 6


@dataclass(frozen=True)
class LayerSpec:
    name: str
    rows: int
    cols: int          # D_in
    has_bias: bool = True

    @property
    def width(self) -> int:
        """Stored entries per row."""
        return self.cols + int(self.has_bias)

    @property
    def size(self) -> int:
        return self.rows * self.width


@dataclass(frozen=True)
class ParamLayout:
    layers: tuple[LayerSpec, ...]

    @property
    def total(self) -> int:
        return sum(l.size for l in self.layers)

    @property
    def n_nodes(self) -> int:
        return sum(l.rows for l in self.layers)

    def offsets(self) -> list[int]:
        out, off = [], 0
        for l in self.layers:
            out.append(off)
            off += l.size
        return out

    def to_json(self) -> list:
        return [[l.name, l.rows, l.cols, l.has_bias] for l in self.layers]

    @classmethod
    def from_json(cls, rows: list) -> "ParamLayout":
        return cls(tuple(LayerSpec(str(n), int(r), int(c), bool(b)) for n, r, c, b in rows))


@dataclass(frozen=True)
class BackboneConfig:
    d: int
    L: int
    H: int = 8
    order: tuple[int, ...] | None = None
    head: str = "categorical"
    K: int = 5
    arch: str = "GRU"

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.head == "categorical" and self.L < 2:
            raise ConfigError("L must be >= 2")
        if self.H < 1:
            raise ConfigError("H must be >= 1")
        if self.head not in ("categorical", "mdn"):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.head == "mdn" and self.K < 1:
            raise ConfigError("MDN needs K >= 1 components")
        if self.arch != "GRU":
            raise ConfigError("only the GRU backbone is implemented")
        order = tuple(range(self.d)) if self.order is None else tuple(int(i) for i in self.order)
        if sorted(order) != list(range(self.d)):
            raise ConfigError(f"order {order} is not a permutation of 0..{self.d - 1}")
        object.__setattr__(self, "order", order)

    @property
    def layout(self) -> ParamLayout:
        H = self.H
        if self.head == "categorical":
            return ParamLayout((LayerSpec("embed", H, self.L), LayerSpec("gru", 3 * H, 2 * H + 1),
                                LayerSpec("head", self.L, H)))
        return ParamLayout((LayerSpec("embed", H, 1), LayerSpec("gru", 3 * H, 2 * H + 1),
                            LayerSpec("head", 3 * self.K, H)))


@dataclass
class BackboneWeights:
    theta: np.ndarray
    layout: ParamLayout = field(repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.layout.total,):
            raise ConfigError(f"theta has {self.theta.size} entries, layout needs {self.layout.total}")


def init_weights(config: BackboneConfig, rng_seed: int) -> BackboneWeights:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(rng_seed)
    blocks = []
    for spec in config.layout.layers:
        W = nc.glorot_uniform(rng, spec.rows, spec.cols)
        if spec.has_bias:
            W = np.concatenate([W, np.zeros((spec.rows, 1))], axis=1)
        blocks.append(W.ravel())
    return BackboneWeights(np.concatenate(blocks), config.layout)


def zero_weights(config: BackboneConfig) -> BackboneWeights:
    return BackboneWeights(np.zeros(config.layout.total), config.layout)


def permute_order(config: BackboneConfig, permutation: Sequence[int]) -> BackboneConfig:
    """Same network with dimensions consumed in ``permutation`` order (0-based)."""
    return replace(config, order=tuple(permutation))


# --------------------------------------------------------------------------- forward pieces

class _Net:
    """Per-forward views of the layer blocks of one theta."""

    def __init__(self, theta, config: BackboneConfig):
        theta = nc.as_tensor(theta)
        if theta.shape != (config.layout.total,):
            raise ConfigError(f"theta has shape {theta.shape}, layout needs ({config.layout.total},)")
        H = config.H
        self.config = config
        blocks = {}
        for spec, off in zip(config.layout.layers, config.layout.offsets()):
            blocks[spec.name] = nc.reshape(theta[off:off + spec.size], (spec.rows, spec.width))
        self.embed_T = blocks["embed"].T                     # (D_in+1, H)
        gru = blocks["gru"]                                  # (3H, 2H+2)
        self.gx_T = nc.concat([gru[:, :H], gru[:, 2 * H + 1:]], axis=1).T   # [W_x | b_ih]
        self.gh_T = gru[:, H:2 * H + 1].T                    # [W_h | b_hh]
        self.head_T = blocks["head"].T                       # (H+1, out)

    @staticmethod
    def _aug(x: Tensor) -> Tensor:
        return nc.concat([x, np.ones((x.shape[0], 1))], axis=1)

    def embed(self, inputs: np.ndarray) -> Tensor:
        """``inputs``: (B, D_in) constant encoding of the previous symbol."""
        return nc.matmul(self._aug(nc.as_tensor(inputs)), self.embed_T)

    def gru(self, e: Tensor, h: Tensor) -> Tensor:
        H = self.config.H
        gx = nc.matmul(self._aug(e), self.gx_T)
        gh = nc.matmul(self._aug(h), self.gh_T)
        rz = nc.sigmoid(gx[:, :2 * H] + gh[:, :2 * H])
        r, z = rz[:, :H], rz[:, H:]
        n = nc.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
        return (1.0 - z) * n + z * h

    def head(self, h: Tensor) -> Tensor:
        return nc.matmul(self._aug(h), self.head_T)


def _encode(values: np.ndarray | None, config: BackboneConfig, batch: int) -> np.ndarray:
    """Embedding input for the previous symbol (``None`` = start token)."""
    if config.head == "categorical":
        out = np.zeros((batch, config.L))
        if values is not None:
            out[np.arange(batch), np.asarray(values, dtype=np.int64)] = 1.0
        return out
    out = np.zeros((batch, 1))
    if values is not None:
        out[:, 0] = values
    return out


def _logits(net: _Net, h: Tensor) -> Tensor:
    return nc.clamp(net.head(h), -LOGIT_CLAMP, LOGIT_CLAMP)


def _check_states(x: np.ndarray, config: BackboneConfig) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != config.d:
        raise ConfigError(f"states must have {config.d} columns, got {x.shape[1]}")
    if config.head == "categorical":
        if not np.issubdtype(x.dtype, np.integer):
            if np.any(x != np.round(x)):
                raise ConfigError("categorical states must be integers")
            x = x.astype(np.int64)
        if np.any(x < 0) or np.any(x > config.L - 1):
            raise ConfigError(f"states outside [0, {config.L - 1}]")
    return x


def _hidden_after(net: _Net, config: BackboneConfig, prefix_vals: np.ndarray, batch: int):
    """Hidden state after consuming the start token and ``prefix_vals`` (B, k) in AR order."""
    h = nc.Tensor(np.zeros((batch, config.H)))
    h = net.gru(net.embed(_encode(None, config, batch)), h)
    for k in range(prefix_vals.shape[1]):
        h = net.gru(net.embed(_encode(prefix_vals[:, k], config, batch)), h)
    return h


def _ordered_prefix(x_prefix, config: BackboneConfig) -> np.ndarray:
    prefix = np.asarray(x_prefix).reshape(1, -1)
    if prefix.shape[1] >= config.d:
        raise ConfigError(f"prefix length must be < d={config.d}")
    if config.head == "categorical" and (np.any(prefix < 0) or np.any(prefix > config.L - 1)):
        raise ConfigError(f"prefix entries outside [0, {config.L - 1}]")
    return prefix


# --------------------------------------------------------------------------- public ops

def conditional_distribution(theta, config: BackboneConfig, x_prefix: Sequence = ()) -> np.ndarray:
    """p(x_next | prefix) over the L states; the prefix lists values in AR order."""
    if config.head != "categorical":
        raise ConfigError("conditional_distribution needs a categorical head")
    prefix = _ordered_prefix(x_prefix, config)
    net = _Net(theta, config)
    h = _hidden_after(net, config, prefix, 1)
    return nc.softmax(_logits(net, h)).data[0]


def log_prob_tensor(theta, config: BackboneConfig, x: np.ndarray) -> Tensor:
    """Differentiable per-row log p_theta(x) for a (B, d) batch."""
    x = _check_states(x, config)
    B = x.shape[0]
    net = _Net(theta, config)
    h = nc.Tensor(np.zeros((B, config.H)))
    prev = None
    total = None
    for dim in config.order:
        h = net.gru(net.embed(_encode(prev, config, B)), h)
        vals = x[:, dim]
        if config.head == "categorical":
            logits = _logits(net, h)
            onehot = np.zeros((B, config.L))
            onehot[np.arange(B), vals] = 1.0
            lp = nc.sum(logits * onehot, axis=1) - nc.logsumexp(logits, axis=1)
        else:
            lp = _mdn_log_density(net.head(h), vals, config.K)
        total = lp if total is None else total + lp
        prev = vals
    return total


def joint_log_prob(theta, config: BackboneConfig, x) -> np.ndarray | float:
    x_arr = np.asarray(x)
    out = log_prob_tensor(theta, config, x_arr).data
    return float(out[0]) if x_arr.ndim == 1 else out


def nll(theta, config: BackboneConfig, batch, weights: np.ndarray | None = None) -> Tensor:
    """Mean negative log-likelihood; ``weights`` (summing to 1) replace the uniform mean."""
    batch = np.asarray(batch)
    if batch.size == 0:
        raise ConfigError("nll needs a non-empty batch")
    lp = log_prob_tensor(theta, config, batch)
    if weights is None:
        return -nc.mean(lp)
    return -nc.sum(lp * np.asarray(weights, dtype=np.float64))


def compress_batch(batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique rows with their frequencies; the weighted NLL equals the plain mean."""
    uniq, counts = np.unique(np.asarray(batch), axis=0, return_counts=True)
    return uniq, counts / counts.sum()


def enumerate_joint(theta, config: BackboneConfig) -> np.ndarray:
    """Exact joint over [0, L-1]^d, shaped (L,)*d in natural dimension order."""
    if config.head != "categorical":
        raise ConfigError("enumerate_joint needs a categorical head")
    L, d = config.L, config.d
    if L ** d > MAX_TABLE:
        raise ConfigError(f"L^d = {L}^{d} exceeds {MAX_TABLE}")
    net = _Net(theta, config)
    h = nc.Tensor(np.zeros((1, config.H)))
    logp = np.zeros(1)
    prev = None
    for k in range(d):
        B = h.shape[0]
        h = net.gru(net.embed(_encode(prev, config, B)), h)
        logits = _logits(net, h).data
        lc = logits - (logits.max(axis=1, keepdims=True)
                       + np.log(np.exp(logits - logits.max(axis=1, keepdims=True)).sum(axis=1, keepdims=True)))
        logp = (logp[:, None] + lc).ravel()
        if k < d - 1:
            h = nc.Tensor(np.repeat(h.data, L, axis=0))
            prev = np.tile(np.arange(L), B)
    table = np.exp(logp).reshape((L,) * d)         # axes in AR order
    return np.transpose(table, np.argsort(config.order))


def sample(theta, config: BackboneConfig, n: int, rng_seed) -> np.ndarray:
    """``n`` ancestral samples, shape (n, d)."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    net = _Net(theta, config)
    h = nc.Tensor(np.zeros((n, config.H)))
    dtype = np.int64 if config.head == "categorical" else np.float64
    out = np.zeros((n, config.d), dtype=dtype)
    prev = None
    for dim in config.order:
        h = net.gru(net.embed(_encode(prev, config, n)), h)
        if config.head == "categorical":
            p = nc.softmax(_logits(net, h)).data
            u = rng.random(n)
            vals = (p.cumsum(axis=1) < u[:, None]).sum(axis=1)
            vals = np.minimum(vals, config.L - 1)
        else:
            w, mu, log_std = _mdn_params(net.head(h).data, config.K)
            comp = (w.cumsum(axis=1) < rng.random(n)[:, None]).sum(axis=1)
            comp = np.minimum(comp, config.K - 1)
            rows = np.arange(n)
            vals = mu[rows, comp] + np.exp(log_std[rows, comp]) * rng.standard_normal(n)
        out[:, dim] = vals
        prev = vals
    return out


# --------------------------------------------------------------------------- MDN head

def _mdn_params(raw: np.ndarray, K: int):
    wl = raw[:, :K]
    w = np.exp(wl - wl.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    return w, raw[:, K:2 * K], np.clip(raw[:, 2 * K:], LOG_STD_MIN, LOG_STD_MAX)


def _mdn_log_density(raw: Tensor, x: np.ndarray, K: int) -> Tensor:
    B = raw.shape[0]
    wl = raw[:, :K]
    log_w = wl - nc.matmul(nc.reshape(nc.logsumexp(wl, axis=1), (B, 1)), np.ones((1, K)))
    mu = raw[:, K:2 * K]
    log_std = nc.clamp(raw[:, 2 * K:], LOG_STD_MIN, LOG_STD_MAX)
    xs = np.repeat(np.asarray(x, dtype=np.float64)[:, None], K, axis=1)
    zsc = (xs - mu) * nc.exp(-log_std)
    comp = log_w - 0.5 * nc.square(zsc) - log_std - 0.5 * math.log(2 * math.pi)
    return nc.logsumexp(comp, axis=1)


@dataclass
class Mixture:
    weights: np.ndarray
    means: np.ndarray
    log_stds: np.ndarray

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None]
        s = np.exp(self.log_stds)
        comp = (np.log(self.weights) - 0.5 * ((x - self.means) / s) ** 2 - self.log_stds
                - 0.5 * math.log(2 * math.pi))
        m = comp.max(axis=-1, keepdims=True)
        return (m + np.log(np.exp(comp - m).sum(axis=-1, keepdims=True)))[..., 0]


def mdn_conditional(theta, config: BackboneConfig, x_prefix: Sequence = ()) -> Mixture:
    """Gaussian mixture for the next dimension given a prefix (AR order)."""
    if config.head != "mdn":
        raise ConfigError("mdn_conditional needs an MDN head")
    prefix = _ordered_prefix(x_prefix, config)
    net = _Net(theta, config)
    h = _hidden_after(net, config, prefix.astype(np.float64), 1)
    w, mu, log_std = _mdn_params(net.head(h).data, config.K)
    return Mixture(w[0], mu[0], log_std[0])
