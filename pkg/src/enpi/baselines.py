"""Split-conformal baselines run in the same sequential sliding-window regime.

Both methods fit the base regressor once on a random half of the training
segment and calibrate on the other half. After each test step the oldest
calibration residual is replaced by the new test residual, so the window
keeps the calibration size.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import Dataset, PredictionInterval, ResidualWindow, weighted_quantile
from .ensemble import derive_seed
from .evaluation import EvalRecord, score_intervals
from .regressors import FittedModel, RegressorSpec, fit

log = logging.getLogger(__name__)


@dataclass
class SplitState:
    proper_model: FittedModel
    proper_idx: np.ndarray
    calibration_idx: np.ndarray
    calibration_window: ResidualWindow
    split_fraction: float = 0.5


@dataclass
class BaselineRun:
    method: str
    state: SplitState
    intervals: list[PredictionInterval]
    observed: list[float]
    fallback_steps: int = 0

    def records(self) -> list[EvalRecord]:
        return score_intervals(self.intervals, self.observed)


def split_fit(data: Dataset, spec: RegressorSpec, seed: int, split_fraction: float = 0.5) -> SplitState:
    """Random proper/calibration split of the training segment and proper fit.

    The calibration set has ``floor((1 - split_fraction) * T)`` points and its
    responses are never seen by the fit.
    """
    T = data.train_len
    if T < 4:
        raise ValueError("insufficient data: split conformal needs at least 4 training points")
    rng = np.random.default_rng(derive_seed(seed, 0))
    n_cal = int(np.floor((1.0 - split_fraction) * T))
    perm = rng.permutation(T)
    cal_idx = np.sort(perm[:n_cal])
    proper_idx = np.sort(perm[n_cal:])
    model = fit(replace(spec, seed=derive_seed(seed, 1)), data.X_train[proper_idx], data.y_train[proper_idx])
    resid = np.abs(data.y_train[cal_idx] - model.predict_many(data.X_train[cal_idx]))
    return SplitState(model, proper_idx, cal_idx, ResidualWindow(resid), split_fraction)


def run_icp(data: Dataset, spec: RegressorSpec, alpha: float = 0.1, seed: int = 0) -> BaselineRun:
    """Split conformal: ``f(x_t) +/- (1-alpha)`` quantile of the calibration window."""
    state = split_fit(data, spec, seed)
    run = BaselineRun("icp", state, [], [])
    preds = state.proper_model.predict_many(data.X_test)
    window = state.calibration_window
    for t in range(data.test_len):
        run.intervals.append(PredictionInterval(float(preds[t]), window.quantile(1.0 - alpha), alpha))
        y_t = float(data.y_test[t])
        run.observed.append(y_t)
        window.push(abs(y_t - preds[t]))
    return run


@dataclass(frozen=True, eq=False)
class WeightModel:
    coef: np.ndarray
    intercept: float
    converged: bool
    n_iter: int
    x_mean: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.x_mean is not None:
            X = (X - self.x_mean) / self.x_scale
        return X @ self.coef + self.intercept

    def odds(self, X) -> np.ndarray:
        """Density-ratio weights ``p(x) / (1 - p(x))``."""
        return np.exp(self.decision(X))


def logistic_objective(w, b, X, labels, penalty):
    """Penalized negative log-likelihood; the intercept is not penalized."""
    z = X @ w + b
    return float(np.sum(np.logaddexp(0.0, z) - labels * z) + 0.5 * penalty * (w @ w))


def logistic_gradient(w, b, X, labels, penalty):
    p = _sigmoid(X @ w + b)
    r = p - labels
    return X.T @ r + penalty * w, float(r.sum())


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def fit_logistic(X, labels, ridge_penalty: float = 1.0, tol: float = 1e-8, max_iter: int = 100) -> WeightModel:
    """Ridge-penalized logistic regression by damped Newton iterations.

    Stops when the gradient norm is at most ``tol``; step lengths are halved
    until the objective decreases.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=float).ravel()
    if X.shape[0] != labels.size:
        raise ValueError("X and labels have different lengths")
    if not np.all((labels == 0) | (labels == 1)) or labels.min() == labels.max():
        raise ValueError("degenerate labels")
    if not ridge_penalty > 0:
        raise ValueError("ridge_penalty must be > 0")
    n, d = X.shape
    w = np.zeros(d)
    rate = labels.mean()
    b = float(np.log(rate / (1.0 - rate)))
    obj = logistic_objective(w, b, X, labels, ridge_penalty)
    for it in range(max_iter + 1):
        gw, gb = logistic_gradient(w, b, X, labels, ridge_penalty)
        if np.sqrt(gw @ gw + gb * gb) <= tol:
            return WeightModel(w, b, True, it)
        if it == max_iter:
            break
        p = _sigmoid(X @ w + b)
        s = p * (1.0 - p)
        Xa = np.column_stack([X, np.ones(n)])
        H = Xa.T @ (s[:, None] * Xa)
        H[:d, :d] += ridge_penalty * np.eye(d)
        grad = np.append(gw, gb)
        step = np.linalg.solve(H, -grad)
        t = 1.0
        # inside the quadratic region the objective change is below float
        # resolution, so backtracking would reject good steps
        if -(step @ grad) < 1e-12 * max(1.0, abs(obj)):
            w, b = w + step[:d], b + step[d]
            obj = logistic_objective(w, b, X, labels, ridge_penalty)
            continue
        while True:
            w_new, b_new = w + t * step[:d], b + t * step[d]
            obj_new = logistic_objective(w_new, b_new, X, labels, ridge_penalty)
            if obj_new <= obj or t < 1e-10:
                break
            t *= 0.5
        w, b, obj = w_new, b_new, obj_new
    return WeightModel(w, b, False, max_iter)


def covariate_shift_weights(X_cal: np.ndarray, x_test: np.ndarray, ridge_penalty: Optional[float] = None):
    """Odds weights for calibration points and the test point.

    A logistic classifier separates the calibration covariates (label 0) from
    the test covariate (label 1) on features standardized over the pooled set.
    The default penalty equals the feature count, which gives the linear
    score an O(1) prior standard deviation for any dimension.

    Returns ``(w_cal, w_test, model)``.
    """
    Xp = np.vstack([X_cal, x_test[None, :]])
    mean = Xp.mean(axis=0)
    scale = Xp.std(axis=0)
    scale[~(scale > 0)] = 1.0
    Z = (Xp - mean) / scale
    labels = np.zeros(Z.shape[0])
    labels[-1] = 1.0
    penalty = float(Z.shape[1]) if ridge_penalty is None else ridge_penalty
    model = fit_logistic(Z, labels, penalty)
    model = replace(model, x_mean=mean, x_scale=scale)
    logits = model.decision(Xp)
    # shift before exponentiating; weights are only used after normalization
    odds = np.exp(logits - logits.max())
    return odds[:-1], float(odds[-1]), model


def run_weighted_icp(
    data: Dataset,
    spec: RegressorSpec,
    alpha: float = 0.1,
    seed: int = 0,
    ridge_penalty: Optional[float] = None,
) -> BaselineRun:
    """Split conformal with calibration residuals reweighted by estimated odds.

    At each step the weight model is refit on the current calibration window,
    and the test point's weight is attached to a ``+inf`` pseudo-residual. If
    the weight fit does not converge, uniform weights are used for that step.
    """
    state = split_fit(data, spec, seed)
    run = BaselineRun("wicp", state, [], [])
    preds = state.proper_model.predict_many(data.X_test)
    window = state.calibration_window
    cal_x = deque(data.X_train[state.calibration_idx], maxlen=len(window))
    level = 1.0 - alpha
    for t in range(data.test_len):
        x_t = data.X_test[t]
        w_cal, w_test, model = covariate_shift_weights(np.array(cal_x), x_t, ridge_penalty)
        if not model.converged:
            log.warning("weight model did not converge at test step %d; using uniform weights", t)
            run.fallback_steps += 1
            w_cal, w_test = np.ones(len(window)), 1.0
        values = np.append(window.values(), np.inf)
        half = weighted_quantile(values, np.append(w_cal, w_test), level)
        run.intervals.append(PredictionInterval(float(preds[t]), half, alpha))
        y_t = float(data.y_test[t])
        run.observed.append(y_t)
        window.push(abs(y_t - preds[t]))
        cal_x.append(x_t)
    return run
