"""Sequential ensemble prediction intervals with leave-one-out residuals.

The ensemble is fit once on the training segment. Each training point gets a
residual from the models whose bootstrap sample excluded it; at test time the
interval half-width is a quantile of a sliding window of such residuals, and
the window is updated only after the true response is revealed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .core import Dataset, PredictionInterval, ResidualWindow, empirical_quantile
from .evaluation import EvalRecord, score_intervals
from .regressors import FittedModel, RegressorSpec, fit

CENTER_MODES = ("loo_quantile", "loo_mean")


def derive_seed(*keys: int) -> int:
    """Deterministic 64-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass(frozen=True)
class Aggregator:
    """Aggregation of base-model predictions: mean, median or trimmed mean."""

    kind: str = "mean"
    trim: float = 0.1

    def __post_init__(self):
        if self.kind not in ("mean", "median", "trimmed_mean"):
            raise ValueError(f"unknown aggregation {self.kind!r}")
        if not 0.0 <= self.trim < 0.5:
            raise ValueError("trim must lie in [0, 0.5)")

    @classmethod
    def parse(cls, text: "str | Aggregator") -> "Aggregator":
        """Accepts ``mean``, ``median``, ``trimmed_mean`` or ``trimmed_mean(0.2)``."""
        if isinstance(text, Aggregator):
            return text
        text = text.strip()
        if text.startswith("trimmed_mean(") and text.endswith(")"):
            return cls("trimmed_mean", float(text[len("trimmed_mean(") : -1]))
        return cls(text)

    def __str__(self):
        return f"trimmed_mean({self.trim:g})" if self.kind == "trimmed_mean" else self.kind

    def __call__(self, preds) -> float:
        preds = np.asarray(preds, dtype=float)
        if self.kind == "mean":
            return float(np.mean(preds))
        if self.kind == "median":
            return float(np.median(preds))
        # scipy cuts int(trim * m) from each end, i.e. the floor
        return float(stats.trim_mean(preds, self.trim))

    def masked(self, preds: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Row-wise aggregate of ``preds`` over the entries where ``mask`` holds.

        ``preds`` has shape (rows, B) or (B,); ``mask`` has shape (rows, B).
        """
        preds = np.broadcast_to(preds, mask.shape)
        if self.kind == "mean":
            return (preds * mask).sum(axis=1) / mask.sum(axis=1)
        if self.kind == "median":
            return np.nanmedian(np.where(mask, preds, np.nan), axis=1)
        return np.array([self(p[m]) for p, m in zip(preds, mask)])


@dataclass(frozen=True, eq=False)
class EnsembleState:
    models: tuple[FittedModel, ...]
    index_sets: np.ndarray  # (B, T) bootstrap indices, 0-based
    phi: Aggregator
    train_len: int

    def __post_init__(self):
        if len(self.models) != self.index_sets.shape[0]:
            raise ValueError("one index set per model required")
        if self.index_sets.shape[1] != self.train_len:
            raise ValueError("each index set must have exactly train_len entries")
        self.index_sets.setflags(write=False)
        excl = _exclusion_mask(self.index_sets, self.train_len)
        excl.setflags(write=False)
        object.__setattr__(self, "_excluded", excl)

    @property
    def B(self) -> int:
        return len(self.models)

    @property
    def excluded(self) -> np.ndarray:
        """(T, B) mask: ``excluded[i, b]`` iff index i is absent from S_b.

        Rows with no excluding model fall back to all models.
        """
        return self._excluded

    def member_predictions(self, X) -> np.ndarray:
        """(n, B) matrix of every base model's prediction."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([m.predict_many(X) for m in self.models])


def _exclusion_mask(index_sets: np.ndarray, T: int) -> np.ndarray:
    B = index_sets.shape[0]
    included = np.zeros((T, B), dtype=bool)
    for b in range(B):
        included[index_sets[b], b] = True
    excl = ~included
    excl[~excl.any(axis=1)] = True
    return excl


def draw_ensemble_size(b_tilde: int, rng: np.random.Generator) -> int:
    """B ~ Binomial(b_tilde, 1/e), redrawn while zero."""
    if b_tilde < 3:
        raise ValueError("b_tilde must be >= 3 so that b_tilde/e > 1")
    while True:
        B = int(rng.binomial(b_tilde, math.exp(-1.0)))
        if B > 0:
            return B


def fit_ensemble(
    data: Dataset,
    spec: RegressorSpec,
    b_tilde: int = 100,
    phi: "str | Aggregator" = "mean",
    seed: int = 0,
    n_jobs: int = 1,
) -> EnsembleState:
    """Fit B bootstrap models on the training segment of ``data``.

    Random draws happen in a fixed order (B, then all index sets), and each
    model's own seed is derived from ``(seed, b)``, so the result does not
    depend on ``n_jobs``.
    """
    T = data.train_len
    if T < 2:
        raise ValueError("insufficient data")
    rng = np.random.default_rng(seed)
    B = draw_ensemble_size(b_tilde, rng)
    index_sets = rng.integers(0, T, size=(B, T))
    X, y = data.X_train, data.y_train

    def fit_one(b):
        model_spec = replace(spec, seed=derive_seed(seed, b))
        S = index_sets[b]
        return fit(model_spec, X[S], y[S])

    if n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(n_jobs) as pool:
            models = tuple(pool.map(fit_one, range(B)))
    else:
        models = tuple(fit_one(b) for b in range(B))
    return EnsembleState(models, index_sets, Aggregator.parse(phi), T)


def loo_predict(ens: EnsembleState, i: int, x) -> float:
    """Aggregate the predictions at ``x`` of the models that never saw index ``i``.

    ``i`` is 0-based. If every model saw ``i``, all models are used.
    """
    if not 0 <= i < ens.train_len:
        raise IndexError(f"training index {i} out of range")
    preds = ens.member_predictions(x)[0]
    return ens.phi(preds[ens.excluded[i]])


def loo_predictions(ens: EnsembleState, member_preds: np.ndarray) -> np.ndarray:
    """Leave-i-out predictions for all i at one point, from its (B,) member predictions."""
    return ens.phi.masked(member_preds, ens.excluded)


def init_residuals(ens: EnsembleState, data: Dataset) -> ResidualWindow:
    """Window of |y_i - f_{-i}(x_i)| over the training segment, in index order."""
    P = ens.member_predictions(data.X_train)
    loo = ens.phi.masked(P, ens.excluded)
    return ResidualWindow(np.abs(data.y_train - loo))


def predict_next_interval(
    ens: EnsembleState,
    window: ResidualWindow,
    x_t,
    alpha: float,
    center_mode: str = "loo_quantile",
    member_preds: Optional[np.ndarray] = None,
) -> PredictionInterval:
    """Interval for the next response from the current residual window.

    The center is the ``1 - alpha`` quantile of the T leave-i-out predictions
    at ``x_t`` (``center_mode="loo_mean"`` uses their mean instead); the
    half-width is the ``1 - alpha`` quantile of the window.
    """
    if len(window) != ens.train_len:
        raise ValueError("residual window is not full")
    if member_preds is None:
        member_preds = ens.member_predictions(x_t)[0]
    loo = loo_predictions(ens, member_preds)
    if center_mode == "loo_quantile":
        center = empirical_quantile(loo, 1.0 - alpha)
    elif center_mode == "loo_mean":
        center = float(np.mean(loo))
    else:
        raise ValueError(f"unknown center mode {center_mode!r}")
    return PredictionInterval(center, window.quantile(1.0 - alpha), alpha)


@dataclass
class SequentialRun:
    """State of an online run: emitted intervals plus the sliding window."""

    ensemble: EnsembleState
    residual_window: ResidualWindow
    alpha: float
    center_mode: str = "loo_quantile"
    intervals: list[PredictionInterval] = field(default_factory=list)
    observed: list[float] = field(default_factory=list)
    # (window snapshot, new residual) pairs, for p-value diagnostics
    residual_stream: list[tuple[np.ndarray, float]] = field(default_factory=list)
    keep_stream: bool = False

    def records(self) -> list[EvalRecord]:
        return score_intervals(self.intervals, self.observed)

    @property
    def awaiting_observation(self) -> bool:
        return len(self.intervals) > len(self.observed)

    def emit(self, x_t, member_preds=None) -> PredictionInterval:
        if self.awaiting_observation:
            raise RuntimeError("previous interval has not received its observation")
        interval = predict_next_interval(
            self.ensemble, self.residual_window, x_t, self.alpha, self.center_mode, member_preds
        )
        self.intervals.append(interval)
        return interval


def ingest_observation(run: SequentialRun, y_t: float) -> SequentialRun:
    """Slide the window with |y_t - center| of the interval just emitted."""
    if not run.awaiting_observation:
        raise RuntimeError("no interval awaiting an observation")
    eps = abs(float(y_t) - run.intervals[-1].center)
    if run.keep_stream:
        run.residual_stream.append((run.residual_window.values(), eps))
    run.residual_window.push(eps)
    run.observed.append(float(y_t))
    return run


def run_sequential(
    data: Dataset,
    spec: RegressorSpec,
    b_tilde: int = 100,
    phi: "str | Aggregator" = "mean",
    alpha: float = 0.1,
    seed: int = 0,
    center_mode: str = "loo_quantile",
    keep_stream: bool = False,
    n_jobs: int = 1,
) -> SequentialRun:
    """Fit once on the training segment, then emit one interval per test step."""
    if data.test_len < 1:
        raise ValueError("no test points")
    ens = fit_ensemble(data, spec, b_tilde, phi, seed, n_jobs)
    run = SequentialRun(
        ens, init_residuals(ens, data), alpha, center_mode, keep_stream=keep_stream
    )
    # member predictions depend on covariates only, so batching them is not look-ahead
    P_test = ens.member_predictions(data.X_test)
    for t in range(data.test_len):
        run.emit(data.X_test[t], P_test[t])
        ingest_observation(run, data.y_test[t])
    return run
