"""Base regression algorithms with deterministic, seeded fitting.

Three families are available: ridge (closed form on the SVD, penalty picked by
generalized cross-validation), lasso (cyclic coordinate descent, penalty picked
by GCV with ``df = #nonzero``) and a depth-limited random forest whose trees
differ only through random feature subsets at each split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FAMILIES = ("ridge", "lasso", "forest")


def uniform_grid(low: float = 1e-4, high: float = 10.0, size: int = 10) -> tuple[float, ...]:
    return tuple(float(v) for v in np.linspace(low, high, size))


@dataclass(frozen=True)
class RegressorSpec:
    family: str = "ridge"
    penalty_grid: tuple[float, ...] = field(default_factory=uniform_grid)
    n_trees: int = 10
    max_depth: int = 2
    seed: int = 0
    standardize: bool = True
    fit_intercept: bool = True
    lasso_tol: float = 1e-6
    lasso_max_sweeps: int = 1000

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown regressor family {self.family!r}")
        grid = tuple(float(v) for v in self.penalty_grid)
        if not grid or any(not (v > 0) for v in grid):
            raise ValueError("penalty_grid entries must be > 0")
        object.__setattr__(self, "penalty_grid", grid)
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-encoded binary tree; ``feature[node] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        def _depth(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(_depth(self.left[node]), _depth(self.right[node]))

        return _depth(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return self.value[node]
            go_left = X[rows, np.where(internal, feat, 0)] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)


@dataclass(frozen=True, eq=False)
class FittedModel:
    family: str
    n_features: int
    coef: Optional[np.ndarray] = None
    intercept: float = 0.0
    trees: tuple[Tree, ...] = ()
    chosen_penalty: Optional[float] = None

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: model expects {self.n_features} features, got {X.shape}"
            )
        if self.family == "forest":
            return np.mean([t.apply(X) for t in self.trees], axis=0)
        return X @ self.coef + self.intercept


def predict(model: FittedModel, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.n_features:
        raise ValueError(
            f"dimension mismatch: model expects {model.n_features} features, got {x.size}"
        )
    return float(model.predict_many(x[None, :])[0])


def gcv_score(X, y, lam: float) -> float:
    """GCV criterion ``||y - Hy||^2 / (n (1 - tr(H)/n)^2)`` for ridge.

    ``H = X (X'X + lam I)^{-1} X'``; no centering is applied here.
    """
    if not lam > 0:
        raise ValueError("penalty must be > 0")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    H = X @ np.linalg.solve(X.T @ X + lam * np.eye(d), X.T)
    return _gcv(float(np.sum((y - H @ y) ** 2)), float(np.trace(H)), n)


def _gcv(rss: float, df: float, n: int) -> float:
    ratio = df / n
    if ratio >= 1.0:
        return math.inf
    return rss / (n * (1.0 - ratio) ** 2)


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def lasso_cd(X, y, lam, beta0=None, tol=1e-6, max_sweeps=1000):
    """Minimize ``0.5 ||y - X b||^2 + lam ||b||_1`` by cyclic coordinate descent.

    Coordinates are visited in fixed order 0..d-1. Stops once a full sweep
    changes no coefficient by more than ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    col_sq = np.einsum("ij,ij->j", X, X)
    resid = y - X @ beta
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            rho = X[:, j] @ resid + col_sq[j] * old
            new = float(soft_threshold(rho, lam)) / col_sq[j]
            if new != old:
                resid -= X[:, j] * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta <= tol:
            break
    return beta


def _prepare(spec: RegressorSpec, X: np.ndarray, y: np.ndarray):
    if spec.fit_intercept:
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
    else:
        x_mean = np.zeros(X.shape[1])
        y_mean = 0.0
    Xc = X - x_mean
    if spec.standardize:
        scale = np.sqrt(np.mean(Xc**2, axis=0))
        scale[~(scale > 0)] = 1.0
    else:
        scale = np.ones(X.shape[1])
    return Xc / scale, y - y_mean, x_mean, y_mean, scale


def _unscale(spec, beta_s, x_mean, y_mean, scale, d, penalty, family):
    coef = beta_s / scale
    intercept = y_mean - float(x_mean @ coef) if spec.fit_intercept else 0.0
    return FittedModel(family, d, coef=coef, intercept=intercept, chosen_penalty=penalty)


def _fit_ridge(spec, X, y):
    Xs, yc, x_mean, y_mean, scale = _prepare(spec, X, y)
    n = Xs.shape[0]
    U, s, Vt = np.linalg.svd(Xs, full_matrices=False)
    Uty = U.T @ yc
    s2 = s**2
    best = None
    for lam in spec.penalty_grid:
        shrink = s2 / (s2 + lam)
        fitted = U @ (shrink * Uty)
        score = _gcv(float(np.sum((yc - fitted) ** 2)), float(shrink.sum()), n)
        if best is None or score < best[0]:
            best = (score, lam)
    lam = best[1]
    beta_s = Vt.T @ (s / (s2 + lam) * Uty)
    return _unscale(spec, beta_s, x_mean, y_mean, scale, X.shape[1], lam, "ridge")


def _fit_lasso(spec, X, y):
    Xs, yc, x_mean, y_mean, scale = _prepare(spec, X, y)
    n = Xs.shape[0]
    best = None
    beta = None
    # descending penalties so each solve warm-starts from a sparser one
    for lam in sorted(spec.penalty_grid, reverse=True):
        beta = lasso_cd(Xs, yc, lam, beta, spec.lasso_tol, spec.lasso_max_sweeps)
        rss = float(np.sum((yc - Xs @ beta) ** 2))
        score = _gcv(rss, float(np.count_nonzero(beta)), n)
        # ties go to the smaller penalty, matching a forward scan of the grid
        if best is None or score <= best[0]:
            best = (score, lam, beta.copy())
    return _unscale(spec, best[2], x_mean, y_mean, scale, X.shape[1], best[1], "lasso")


def _best_split(X, y, features):
    """Exhaustive MSE split over midpoints; returns (feature, threshold) or None."""
    n = y.size
    total = y.sum()
    base = total**2 / n
    best_gain, best = 0.0, None
    for j in sorted(features):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        csum = np.cumsum(y[order])[:-1]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        n_left = np.arange(1, n)
        # SSE reduction = sum_L^2/n_L + sum_R^2/n_R - total^2/n
        gain = csum**2 / n_left + (total - csum) ** 2 / (n - n_left) - base
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        # relative slack keeps rounding noise from creating splits of a constant response
        if gain[k] > best_gain + 1e-12 * max(1.0, abs(base)):
            best_gain = gain[k]
            best = (j, 0.5 * (xs[k] + xs[k + 1]))
    return best


def _grow_tree(X, y, max_depth, rng):
    d = X.shape[1]
    m = math.ceil(math.sqrt(d))
    feature, threshold, left, right, value = [], [], [], [], []

    def build(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        if depth >= max_depth or idx.size < 2:
            return node
        subset = rng.choice(d, size=m, replace=False)
        split = _best_split(X[idx], y[idx], subset)
        if split is None:
            return node
        j, thr = split
        mask = X[idx, j] <= thr
        feature[node], threshold[node] = j, thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(y.size), 0)
    return Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value),
    )


def _fit_forest(spec, X, y):
    rng = np.random.default_rng(spec.seed)
    trees = tuple(_grow_tree(X, y, spec.max_depth, rng) for _ in range(spec.n_trees))
    return FittedModel("forest", X.shape[1], trees=trees)


_FITTERS = {"ridge": _fit_ridge, "lasso": _fit_lasso, "forest": _fit_forest}


def fit(spec: RegressorSpec, X, y) -> FittedModel:
    """Fit the base algorithm described by ``spec`` to ``(X, y)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different lengths")
    if y.size < 2:
        raise ValueError("insufficient data")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("invalid value: non-finite training data")
    return _FITTERS[spec.family](spec, X, y)
