"""Reaction systems on a bounded integer lattice and the built-in catalogue.

Propensities are restricted to a small set of closed forms so that the
compiled kernel and the pure-Python fallback evaluate them with the same
floating-point operations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

# kind codes shared with the kernels
CONST, LINEAR, PRODUCT, HILL_REPRESSION, LOGISTIC = range(5)
KIND_NAMES = {"const": CONST, "linear": LINEAR, "product": PRODUCT,
              "hill_repression": HILL_REPRESSION, "logistic": LOGISTIC}


@dataclass(frozen=True)
class Propensity:
    """``rate * f(x)`` with f selected by ``kind``.

    const: 1;  linear: x[i];  product: x[i]*x[j];
    hill_repression: K^n / (K^n + x[j]^n);  logistic: x[i]*(K - x[i])/K.
    """

    kind: str
    rate: float
    i: int = 0
    j: int = 0
    K: float = 1.0
    n: float = 1.0

    def __post_init__(self):
        if self.kind not in KIND_NAMES:
            raise ConfigError(f"unknown propensity kind {self.kind!r}; valid: {sorted(KIND_NAMES)}")
        if self.rate < 0:
            raise ConfigError("propensity rate must be non-negative")


@dataclass
class ReactionSystem:
    name: str
    d: int
    L: int
    stoichiometry: np.ndarray  # (R, d) int64
    propensities: tuple[Propensity, ...]
    x0: np.ndarray
    rates: dict = field(default_factory=dict)

    def __post_init__(self):
        self.stoichiometry = np.asarray(self.stoichiometry, dtype=np.int64).reshape(-1, self.d)
        self.x0 = np.asarray(self.x0, dtype=np.int64).reshape(self.d)
        if len(self.propensities) != self.stoichiometry.shape[0]:
            raise ConfigError("one propensity per reaction required")
        if self.L < 2:
            raise ConfigError("L must be >= 2")
        for p in self.propensities:
            if not (0 <= p.i < self.d and 0 <= p.j < self.d):
                raise ConfigError(f"propensity species index out of range: {p}")

    @property
    def n_reactions(self) -> int:
        return self.stoichiometry.shape[0]

    def kernel_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """(kinds int32[R], params float64[R, 5]) with params = rate, i, j, K^n, n."""
        kinds = np.array([KIND_NAMES[p.kind] for p in self.propensities], dtype=np.int32)
        params = np.array([[p.rate, p.i, p.j, p.K ** p.n if p.kind == "hill_repression" else p.K, p.n]
                           for p in self.propensities], dtype=np.float64).reshape(-1, 5)
        return kinds, params

    def propensity_vector(self, x) -> np.ndarray:
        """Propensities at state ``x`` after the boundary rule (reference, not the hot path)."""
        from ._ssa_py import propensities_at
        kinds, params = self.kernel_tables()
        return np.array(propensities_at(self.stoichiometry.tolist(), kinds.tolist(),
                                        params.tolist(), self.L, [int(v) for v in x]))

    def in_bounds(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= 0) & (x <= self.L - 1)))

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d, "L": self.L, "rates": dict(self.rates),
                "x0": self.x0.tolist()}


def birth_death(k: float = 5.0, gamma: float = 0.5, L: int = 32, x0=(0,)) -> ReactionSystem:
    return ReactionSystem(
        name="birth_death", d=1, L=L,
        stoichiometry=[[1], [-1]],
        propensities=(Propensity("const", k), Propensity("linear", gamma, i=0)),
        x0=x0, rates={"k": k, "gamma": gamma})


def sis_epidemic(beta: float = 0.3, gamma: float = 0.1, population: int = 50, L: int = 51,
                 x0=(5,)) -> ReactionSystem:
    # infection beta * I * (N - I) / N, recovery gamma * I
    return ReactionSystem(
        name="sis_epidemic", d=1, L=L,
        stoichiometry=[[1], [-1]],
        propensities=(Propensity("logistic", beta, i=0, K=float(population)),
                      Propensity("linear", gamma, i=0)),
        x0=x0, rates={"beta": beta, "gamma": gamma, "population": population})


def toggle_switch(k: float = 12.0, K: float = 6.0, hill: float = 2.0, gamma: float = 0.6,
                  L: int = 32, x0=(0, 0)) -> ReactionSystem:
    # each species is produced under Hill repression by the other and degrades linearly
    return ReactionSystem(
        name="toggle_switch", d=2, L=L,
        stoichiometry=[[1, 0], [-1, 0], [0, 1], [0, -1]],
        propensities=(Propensity("hill_repression", k, i=0, j=1, K=K, n=hill),
                      Propensity("linear", gamma, i=0),
                      Propensity("hill_repression", k, i=1, j=0, K=K, n=hill),
                      Propensity("linear", gamma, i=1)),
        x0=x0, rates={"k": k, "K": K, "hill": hill, "gamma": gamma})


BUILTIN = {"birth_death": birth_death, "sis_epidemic": sis_epidemic,
           "toggle_switch": toggle_switch}


def builtin_system(name: str, **overrides) -> ReactionSystem:
    try:
        factory = BUILTIN[name]
    except KeyError:
        raise ConfigError(f"unknown system {name!r}; valid names: {', '.join(sorted(BUILTIN))}") from None
    return factory(**overrides)
