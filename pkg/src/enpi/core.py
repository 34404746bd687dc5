"""Shared types, pinned quantile conventions and the empirical p-value."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# level*(n+1) within this distance of an integer is treated as that integer,
# so that e.g. 0.9 * 100 does not round up to 91.
_CEIL_SLACK = 1e-9


def _as_finite_array(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(arr)):
        raise ValueError("invalid value")
    return arr


def quantile_rank(n: int, level: float) -> int:
    """1-based order statistic used by :func:`empirical_quantile`."""
    k = math.ceil(level * (n + 1) - _CEIL_SLACK)
    return max(1, min(n, k))


def empirical_quantile(values: Sequence[float], level: float) -> float:
    """Return the k-th smallest value, ``k = min(n, ceil(level * (n + 1)))``.

    This is the finite-sample conformal quantile: with it, a new score is at
    most the quantile exactly when its p-value is at least ``1 - level``
    (for distinct scores and integer ``(1 - level) * n``).
    """
    if not 0.0 < level <= 1.0:
        raise ValueError(f"level must lie in (0, 1], got {level}")
    arr = _as_finite_array(values)
    k = quantile_rank(arr.size, level)
    return float(np.partition(arr, k - 1)[k - 1])


def weighted_quantile(values: Sequence[float], weights: Sequence[float], level: float) -> float:
    """Smallest value whose cumulative normalized weight reaches ``level``.

    ``values`` may contain ``+inf`` (used for the test-point pseudo residual in
    weighted conformal prediction); weights must be finite and non-negative.
    """
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if v.shape != w.shape:
        raise ValueError("length mismatch between values and weights")
    if v.size == 0:
        raise ValueError("empty sample")
    if np.any(np.isnan(v)) or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("invalid value")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    target = level * total * (1.0 - _CEIL_SLACK)
    idx = int(np.searchsorted(cum, target, side="left"))
    idx = min(idx, v.size - 1)
    return float(v[order][idx])


def empirical_p_value(residuals: Sequence[float], eps_new: float) -> float:
    """Fraction of ``residuals`` strictly greater than ``eps_new``."""
    arr = np.asarray(residuals, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty sample")
    if np.any(np.isnan(arr)) or math.isnan(eps_new):
        raise ValueError("invalid value")
    return int(np.count_nonzero(arr > eps_new)) / arr.size


@dataclass(frozen=True)
class Dataset:
    """A time series of aligned features/response with a chronological split.

    Row ``t`` of ``features`` is the covariate vector observed with
    ``response[t]``. The first ``train_len`` rows are training data, the
    remaining ``test_len`` rows are revealed one at a time.
    """

    features: np.ndarray
    response: np.ndarray
    train_len: int
    test_len: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError("features must be a 2-d array with at least one column")
        if X.shape[0] != y.shape[0]:
            raise ValueError("features and response have different lengths")
        if self.train_len < 0 or self.test_len < 0:
            raise ValueError("negative split length")
        if self.train_len + self.test_len != y.shape[0]:
            raise ValueError(
                f"train_len + test_len = {self.train_len + self.test_len} "
                f"but the series has {y.shape[0]} rows"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("invalid value: non-finite entry in dataset")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def X_train(self) -> np.ndarray:
        return self.features[: self.train_len]

    @property
    def y_train(self) -> np.ndarray:
        return self.response[: self.train_len]

    @property
    def X_test(self) -> np.ndarray:
        return self.features[self.train_len :]

    @property
    def y_test(self) -> np.ndarray:
        return self.response[self.train_len :]

    @classmethod
    def from_fraction(cls, features, response, train_fraction: float) -> "Dataset":
        """Split chronologically: the first ``ceil(train_fraction * n)`` rows train."""
        if not 0.0 < train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        n = len(response)
        train_len = min(n, math.ceil(train_fraction * n - _CEIL_SLACK))
        return cls(features, response, train_len, n - train_len)


@dataclass(frozen=True)
class PredictionInterval:
    center: float
    half_width: float
    alpha: float

    def __post_init__(self):
        if not self.half_width >= 0:
            raise ValueError("half_width must be non-negative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    def __contains__(self, y: float) -> bool:
        return self.lower <= y <= self.upper


class ResidualWindow:
    """Fixed-capacity FIFO of non-negative residuals.

    The window is created full and stays full: every :meth:`push` evicts the
    oldest entry.
    """

    def __init__(self, residuals: Iterable[float]):
        values = [float(r) for r in residuals]
        if not values:
            raise ValueError("empty sample")
        if any(not (r >= 0.0) for r in values):
            raise ValueError("residuals must be non-negative")
        self._buf: deque[float] = deque(values, maxlen=len(values))

    @property
    def capacity(self) -> int:
        return self._buf.maxlen

    def __len__(self) -> int:
        return len(self._buf)

    def __iter__(self):
        return iter(self._buf)

    def push(self, residual: float) -> float:
        """Append ``residual`` and return the evicted oldest value."""
        residual = float(residual)
        if not residual >= 0.0:
            raise ValueError("residuals must be non-negative")
        oldest = self._buf[0]
        self._buf.append(residual)
        return oldest

    def values(self) -> np.ndarray:
        return np.fromiter(self._buf, dtype=float, count=len(self._buf))

    def quantile(self, level: float) -> float:
        return empirical_quantile(self.values(), level)

    def copy(self) -> "ResidualWindow":
        return ResidualWindow(self._buf)
