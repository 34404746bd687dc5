"""Seeded simulators for the three synthetic series.

* ``multi``: linear model on i.i.d. Gaussian covariates with AR(1) errors.
* ``rand``: random walk with drift; features are the previous ``lag`` values.
* ``network``: sparse linear network of ``k`` nodes; features are the previous
  ``lag`` values of every node, the response is one node's series.

Gaussian draws use inversion (``scipy.special.ndtri``) of 53-bit uniforms from
a PCG64 stream, so a given seed yields the same data on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .core import Dataset

KINDS = ("multi", "rand", "network")
_DEFAULT_LAG = {"rand": 5, "network": 10}


@dataclass(frozen=True)
class SimConfig:
    kind: str = "multi"
    T: int = 200
    T1: int = 200
    p: int = 300
    rho: float = 0.75
    drift: float = 2.0
    lag: Optional[int] = None
    k: int = 10
    edge_weight: float = 1.0
    node: int = 1  # 1-based node whose series is the response
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown simulation kind {self.kind!r}")
        if self.T < 1 or self.T1 < 0:
            raise ValueError("T must be >= 1 and T1 >= 0")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.p < 1 or self.k < 1:
            raise ValueError("p and k must be >= 1")
        if self.lag is not None and self.lag < 1:
            raise ValueError("lag must be >= 1")
        if self.kind != "multi" and self.effective_lag >= self.T:
            raise ValueError("lag must be smaller than T")
        if not 1 <= self.node <= self.k:
            raise ValueError("node must lie in 1..k")

    @property
    def effective_lag(self) -> int:
        return self.lag if self.lag is not None else _DEFAULT_LAG.get(self.kind, 1)


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """N(0, 1) draws by inverse-CDF transform of open-interval uniforms."""
    u = (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) / 2.0**53
    return ndtri(u)


def multi_components(cfg: SimConfig):
    """Return ``(X, beta, eps)``; the response is ``X @ beta + eps``.

    Draw order: beta, then covariates, then the AR innovations.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.T + cfg.T1
    beta = standard_normal(rng, cfg.p)
    beta /= np.linalg.norm(beta)
    X = standard_normal(rng, (n, cfg.p))
    xi = standard_normal(rng, n) * math.sqrt(1.0 - cfg.rho**2) * cfg.noise_scale
    eps = np.empty(n)
    prev = 0.0  # eps_0 = 0
    for t in range(n):
        prev = cfg.rho * prev + xi[t]
        eps[t] = prev
    return X, beta, eps


def gen_multi(cfg: SimConfig) -> Dataset:
    if cfg.kind != "multi":
        raise ValueError("gen_multi needs kind='multi'")
    X, beta, eps = multi_components(cfg)
    return Dataset(X, X @ beta + eps, cfg.T, cfg.T1)


def _lagged(series: np.ndarray, lag: int) -> np.ndarray:
    """Rows ``t = lag..n-1`` of ``[s[t-lag], ..., s[t-1]]`` (oldest first, flattened)."""
    n = series.shape[0]
    cols = [series[lag - j : n - j] for j in range(lag, 0, -1)]
    return np.concatenate([c.reshape(n - lag, -1) for c in cols], axis=1)


def gen_random_walk(cfg: SimConfig) -> Dataset:
    """Random walk ``Y_t = drift + Y_{t-1} + e_t`` with ``Y_0 = 0``.

    Features are ``(Y_{t-1}, ..., Y_{t-lag})``; the first ``lag`` steps lack a
    full history and are dropped from the training segment.
    """
    if cfg.kind != "rand":
        raise ValueError("gen_random_walk needs kind='rand'")
    rng = np.random.default_rng(cfg.seed)
    d = cfg.effective_lag
    n = cfg.T + cfg.T1
    y = np.cumsum(cfg.drift + cfg.noise_scale * standard_normal(rng, n))
    X = _lagged(y, d)[:, ::-1]  # most recent lag first
    return Dataset(X, y[d:], cfg.T - d, cfg.T1)


def neighbor_sets(k: int, rng: np.random.Generator) -> list[np.ndarray]:
    lo, hi = math.ceil(0.2 * k), math.floor(0.4 * k)
    if k < 5 or lo > hi:
        raise ValueError("network needs k >= 5 so that the neighbor-count range is non-empty")
    sizes = rng.integers(lo, hi + 1, size=k)
    return [np.sort(rng.choice(k, size=s, replace=False)) for s in sizes]


def network_matrix(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    A = np.zeros((cfg.k, cfg.k))
    for i, S in enumerate(neighbor_sets(cfg.k, rng)):
        A[i, S] = cfg.edge_weight
    return A


def gen_network(cfg: SimConfig) -> Dataset:
    """Network recursion ``Y_t = A Y_{t-1} + e_t`` with independent node noise.

    Features at step t stack ``Y_{t-lag}, ..., Y_{t-1}`` across all ``k`` nodes
    (dimension ``lag * k``).
    """
    if cfg.kind != "network":
        raise ValueError("gen_network needs kind='network'")
    rng = np.random.default_rng(cfg.seed)
    A = network_matrix(cfg, rng)
    d = cfg.effective_lag
    n = cfg.T + cfg.T1
    state = standard_normal(rng, cfg.k)
    noise = cfg.noise_scale * standard_normal(rng, (n, cfg.k))
    Y = np.empty((n, cfg.k))
    for t in range(n):
        state = A @ state + noise[t]
        Y[t] = state
    X = _lagged(Y, d)
    return Dataset(X, Y[d:, cfg.node - 1], cfg.T - d, cfg.T1)


def generate(cfg: SimConfig) -> Dataset:
    return {"multi": gen_multi, "rand": gen_random_walk, "network": gen_network}[cfg.kind](cfg)
