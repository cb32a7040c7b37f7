"""Attention hypernetwork producing the weight-space vector field over a weight graph.

Node features of each layer are projected to a shared width by a per-layer
linear map plus a learned layer embedding, a sinusoidal encoding of time is
concatenated to every node, one pre-norm self-attention block and one
feed-forward block mix all nodes, and per-layer output maps return
``(D_in + 1) * m`` numbers per node.  The output maps start at zero, so a
fresh hypernetwork generates the identity flow.

Two fixed (untrained) per-coordinate buffers condition the problem: weights
are standardized on the way in, and outputs are multiplied by a scale on the
way out.  Both default to the identity; :meth:`Hypernet.set_normalization`
fits them to a set of anchor weights.
"""
from __future__ import annotations

import math

import numpy as np

from .. import numcore as nc
from ..backbone import ParamLayout
from ..errors import ConfigError
from ..numcore import Param, Tensor
from ..weight_graph import graph_features


def time_features(t: float, n: int) -> np.ndarray:
    """[sin(pi 2^k t), cos(pi 2^k t)] for k < n/2."""
    freqs = math.pi * 2.0 ** np.arange(n // 2)
    return np.concatenate([np.sin(freqs * t), np.cos(freqs * t)])


class Hypernet:
    def __init__(self, layout: ParamLayout, m: int = 1, d_model: int = 32, heads: int = 4,
                 d_time: int = 8, d_ff: int = 64, seed: int = 0):
        if m < 1:
            raise ConfigError("latent path dimension m must be >= 1")
        if d_model % heads:
            raise ConfigError(f"heads={heads} must divide d_model={d_model}")
        if d_time % 2 or d_time >= d_model:
            raise ConfigError("d_time must be even and smaller than d_model")
        self.layout = layout
        self.m, self.d_model, self.heads, self.d_time, self.d_ff = m, d_model, heads, d_time, d_ff
        rng = np.random.default_rng(seed)
        dp = d_model - d_time
        self.in_proj, self.layer_emb, self.out_proj, self.out_bias = [], [], [], []
        for spec in layout.layers:
            w = spec.cols + 1
            self.in_proj.append(Param(nc.glorot_uniform(rng, w, dp), f"in_proj.{spec.name}"))
            self.layer_emb.append(Param(0.1 * rng.standard_normal(dp), f"layer_emb.{spec.name}"))
            self.out_proj.append(Param(np.zeros((d_model, w * m)), f"out_proj.{spec.name}"))
            self.out_bias.append(Param(np.zeros(w * m), f"out_bias.{spec.name}"))
        D = d_model
        self.ln1_g, self.ln1_b = Param(np.ones(D), "ln1.gain"), Param(np.zeros(D), "ln1.bias")
        self.w_qkv = Param(nc.glorot_uniform(rng, D, 3 * D), "attn.qkv")
        self.w_o = Param(nc.glorot_uniform(rng, D, D), "attn.out")
        self.ln2_g, self.ln2_b = Param(np.ones(D), "ln2.gain"), Param(np.zeros(D), "ln2.bias")
        self.w1 = Param(nc.glorot_uniform(rng, D, d_ff), "ff.w1")
        self.b1 = Param(np.zeros(d_ff), "ff.b1")
        self.w2 = Param(nc.glorot_uniform(rng, d_ff, D), "ff.w2")
        self.b2 = Param(np.zeros(D), "ff.b2")
        self.in_shift = np.zeros(layout.total)
        self.in_scale = np.ones(layout.total)
        self.out_scale = np.ones(layout.total)

    def set_normalization(self, anchors: np.ndarray, floor: float = 1e-3) -> None:
        """Standardize inputs by the anchors' per-coordinate mean/std and emit velocities
        in units of that std (std floored at ``floor`` times its average)."""
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.ndim != 2 or anchors.shape[1] != self.layout.total:
            raise ConfigError(f"anchors must be (N, {self.layout.total})")
        std = anchors.std(axis=0)
        std = np.maximum(std, floor * max(std.mean(), 1e-12))
        self.in_shift = anchors.mean(axis=0)
        self.in_scale = 1.0 / std
        self.out_scale = std

    @property
    def normalized(self) -> bool:
        return not (np.all(self.in_shift == 0) and np.all(self.in_scale == 1)
                    and np.all(self.out_scale == 1))

    def buffers(self) -> np.ndarray:
        return np.concatenate([self.in_shift, self.in_scale, self.out_scale])

    def set_buffers(self, flat: np.ndarray) -> None:
        P = self.layout.total
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (3 * P,):
            raise ConfigError(f"expected {3 * P} buffer values, got {flat.shape}")
        self.in_shift, self.in_scale, self.out_scale = (flat[:P].copy(), flat[P:2 * P].copy(),
                                                        flat[2 * P:].copy())

    def params(self) -> list[Param]:
        return [*self.in_proj, *self.layer_emb, self.ln1_g, self.ln1_b, self.w_qkv, self.w_o,
                self.ln2_g, self.ln2_b, self.w1, self.b1, self.w2, self.b2,
                *self.out_proj, *self.out_bias]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        off = 0
        for p in self.params():
            p.data = np.array(flat[off:off + p.size], dtype=np.float64).reshape(p.shape)
            off += p.size
        if off != len(flat):
            raise ConfigError(f"hypernet expects {off} parameters, got {len(flat)}")

    def _flat_input(self, features: list) -> Tensor:
        if len(features) != len(self.layout.layers):
            raise ConfigError("graph does not match the hypernetwork's layout")
        parts = []
        for f, spec in zip(features, self.layout.layers):
            f = nc.as_tensor(f)
            if f.shape != (spec.rows, spec.cols + 1):
                raise ConfigError(f"layer {spec.name}: expected node block {(spec.rows, spec.cols + 1)}, "
                                  f"got {f.shape}")
            parts.append(nc.reshape(f, (f.size,)))
        return nc.concat(parts)

    def _kept_outputs(self) -> np.ndarray | None:
        """Indices of real (non-placeholder) outputs when some layer has no bias."""
        if all(s.has_bias for s in self.layout.layers):
            return None
        keep, off = [], 0
        for s in self.layout.layers:
            idx = np.arange(s.rows * (s.cols + 1) * self.m).reshape(s.rows, s.cols + 1, self.m)
            keep.append((idx[:, :s.cols, :] + off).ravel())
            off += idx.size
        return np.concatenate(keep)

    def _forward_flat(self, flat: Tensor, t: float) -> Tensor:
        if self.normalized:
            flat = nc.mul(flat - self.in_shift, self.in_scale)
        shapes = [(s.rows, s.cols + 1) for s in self.layout.layers]
        x = nc.blocks_linear(flat, shapes, self.in_proj, self.layer_emb)
        N = x.shape[0]
        x = nc.concat([x, np.tile(time_features(t, self.d_time), (N, 1))], axis=1)
        x = x + nc.multi_head_attention(nc.layer_norm(x, self.ln1_g, self.ln1_b),
                                        self.w_qkv, self.w_o, self.heads)
        hid = nc.tanh(nc.linear(nc.layer_norm(x, self.ln2_g, self.ln2_b), self.w1, self.b1))
        x = x + nc.linear(hid, self.w2, self.b2)
        out = nc.segment_linear(x, [s.rows for s in self.layout.layers], self.out_proj, self.out_bias)
        keep = self._kept_outputs()
        if keep is not None:
            out = out[keep]
        out = nc.reshape(out, (self.layout.total, self.m))
        if self.normalized:
            out = nc.mul(out, np.repeat(self.out_scale[:, None], self.m, axis=1))
        return out

    def forward(self, features: list, t: float) -> Tensor:
        """Per-node derivative features in flat-theta order, shape (len(theta), m)."""
        return self._forward_flat(self._flat_input(features), t)

    def field(self, theta, t: float) -> Tensor:
        """g(theta, t) with the graph built differentiably from ``theta``."""
        theta = nc.as_tensor(theta)
        if theta.shape != (self.layout.total,):
            raise ConfigError(f"theta has shape {theta.shape}, layout needs ({self.layout.total},)")
        if all(s.has_bias for s in self.layout.layers):
            # flat theta already is the row-major concatenation of the node blocks
            return self._forward_flat(theta, t)
        return self.forward(graph_features(theta, self.layout), t)


def hypernet_forward(net: Hypernet, graph, t: float) -> Tensor:
    """Field on a :class:`~weightflow.weight_graph.WeightGraph` or a list of node blocks."""
    feats = graph.features if hasattr(graph, "features") else graph
    return net.forward(list(feats), t)
