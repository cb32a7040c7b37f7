"""Lossless reorganization of a flat weight vector into a graph of output neurons.

Each output neuron of a linear layer becomes one node whose feature is its
incoming weights followed by its bias, so a ``D_out x D_in`` layer yields
``D_out`` nodes of width ``D_in + 1``.  Layers without a bias get a zero in
the bias slot, which :func:`from_graph` drops again.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import numcore as nc
from .backbone import ParamLayout
from .errors import ConfigError


@dataclass
class WeightGraph:
    features: list[np.ndarray]            # one (D_out, D_in + 1) block per layer
    layer_table: list[tuple[str, int, int]]  # (layer id, D_in, D_out)

    @property
    def n_nodes(self) -> int:
        return sum(f.shape[0] for f in self.features)

    def nodes(self) -> Iterator[tuple[int, int, np.ndarray]]:
        """(layer index, row index, feature) in layer-then-row order."""
        for li, block in enumerate(self.features):
            for row in range(block.shape[0]):
                yield li, row, block[row]


def _check(theta_len: int, layout: ParamLayout) -> None:
    if theta_len != layout.total:
        raise ConfigError(f"theta has {theta_len} entries but the layout describes {layout.total}")


def to_graph(theta: np.ndarray, layout: ParamLayout) -> WeightGraph:
    theta = np.asarray(theta, dtype=np.float64)
    _check(theta.size, layout)
    feats = []
    for spec, off in zip(layout.layers, layout.offsets()):
        block = theta[off:off + spec.size].reshape(spec.rows, spec.width)
        if not spec.has_bias:
            block = np.concatenate([block, np.zeros((spec.rows, 1))], axis=1)
        feats.append(block.copy())
    return WeightGraph(feats, [(s.name, s.cols, s.rows) for s in layout.layers])


def from_graph(graph: WeightGraph, layout: ParamLayout) -> np.ndarray:
    if len(graph.features) != len(layout.layers):
        raise ConfigError("graph and layout disagree on the number of layers")
    parts = []
    for spec, block in zip(layout.layers, graph.features):
        if block.shape != (spec.rows, spec.cols + 1):
            raise ConfigError(f"layer {spec.name}: expected {spec.rows} nodes of width "
                              f"{spec.cols + 1}, got {block.shape}")
        parts.append((block if spec.has_bias else block[:, :-1]).ravel())
    return np.concatenate(parts)


def graph_features(theta, layout: ParamLayout) -> list[nc.Tensor]:
    """Differentiable counterpart of :func:`to_graph` on a tensor ``theta``."""
    theta = nc.as_tensor(theta)
    _check(theta.size, layout)
    out = []
    for spec, off in zip(layout.layers, layout.offsets()):
        block = nc.reshape(theta[off:off + spec.size], (spec.rows, spec.width))
        if not spec.has_bias:
            block = nc.concat([block, np.zeros((spec.rows, 1))], axis=1)
        out.append(block)
    return out


def node_count(layout: ParamLayout) -> int:
    return layout.n_nodes
