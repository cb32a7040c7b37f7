"""Self-supervised autoencoder projecting anchor weight vectors to a low-dimensional latent."""
from __future__ import annotations

import numpy as np

from .. import numcore as nc
from ..errors import ConfigError
from ..numcore import Param, Tensor


class Autoencoder:
    """Two-layer tanh MLP encoder (P -> hidden -> m) and mirrored decoder."""

    def __init__(self, dim: int, m: int = 1, hidden: int = 32, seed: int = 0):
        if m < 1:
            raise ConfigError("latent dimension must be >= 1")
        rng = np.random.default_rng(seed)
        self.dim, self.m, self.hidden = dim, m, hidden
        self.enc_w1 = Param(nc.glorot_uniform(rng, dim, hidden), "enc.w1")
        self.enc_b1 = Param(np.zeros(hidden), "enc.b1")
        self.enc_w2 = Param(nc.glorot_uniform(rng, hidden, m), "enc.w2")
        self.enc_b2 = Param(np.zeros(m), "enc.b2")
        self.dec_w1 = Param(nc.glorot_uniform(rng, m, hidden), "dec.w1")
        self.dec_b1 = Param(np.zeros(hidden), "dec.b1")
        self.dec_w2 = Param(nc.glorot_uniform(rng, hidden, dim), "dec.w2")
        self.dec_b2 = Param(np.zeros(dim), "dec.b2")
        self.mean = np.zeros(dim)
        self.scale = np.ones(dim)
        self.history: list[float] = []

    def params(self) -> list[Param]:
        return [self.enc_w1, self.enc_b1, self.enc_w2, self.enc_b2,
                self.dec_w1, self.dec_b1, self.dec_w2, self.dec_b2]

    def standardize(self, theta: np.ndarray) -> np.ndarray:
        return (np.asarray(theta) - self.mean) / self.scale

    def encode_tensor(self, x) -> Tensor:
        h = nc.tanh(nc.matmul(nc.as_tensor(x), self.enc_w1) + self.enc_b1)
        return nc.matmul(h, self.enc_w2) + self.enc_b2

    def decode_tensor(self, z) -> Tensor:
        h = nc.tanh(nc.matmul(nc.as_tensor(z), self.dec_w1) + self.dec_b1)
        return nc.matmul(h, self.dec_w2) + self.dec_b2

    def encode(self, theta: np.ndarray) -> np.ndarray:
        x = self.standardize(np.atleast_2d(theta))
        return self.encode_tensor(x).data

    def decode(self, z: np.ndarray) -> np.ndarray:
        x = self.decode_tensor(np.atleast_2d(z)).data
        return x * self.scale + self.mean

    def reconstruction_loss(self, x_std: np.ndarray) -> Tensor:
        return nc.mse(self.decode_tensor(self.encode_tensor(x_std)), x_std)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params()] + [self.mean, self.scale])

    def set_flat(self, flat: np.ndarray) -> None:
        off = 0
        for p in self.params():
            p.data = np.array(flat[off:off + p.size]).reshape(p.shape)
            off += p.size
        self.mean = np.array(flat[off:off + self.dim])
        self.scale = np.array(flat[off + self.dim:off + 2 * self.dim])


def fit_autoencoder(anchors: np.ndarray, m: int = 1, epochs: int = 2000, seed: int = 0,
                    lr: float = 3e-3, hidden: int = 32) -> tuple[Autoencoder, np.ndarray]:
    """Fit on the standardized anchors (N, P); returns the model and latents (N, m)."""
    anchors = np.asarray(anchors, dtype=np.float64)
    if anchors.ndim != 2 or anchors.shape[0] < 2:
        raise ConfigError("fit_autoencoder needs at least two anchors as an (N, P) array")
    ae = Autoencoder(anchors.shape[1], m, hidden, seed)
    ae.mean = anchors.mean(axis=0)
    std = anchors.std(axis=0)
    ae.scale = np.where(std > 1e-12, std, 1.0)
    x = ae.standardize(anchors)
    opt = nc.Adam(ae.params(), lr=lr)
    for _ in range(epochs):
        opt.zero_grad()
        with nc.Tape() as tape:
            loss = ae.reconstruction_loss(x)
        tape.backward(loss)
        opt.step()
        ae.history.append(loss.item())
    return ae, ae.encode(anchors)
