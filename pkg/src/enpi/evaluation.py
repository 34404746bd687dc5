"""Interval scoring, experiment aggregation and Monte-Carlo diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import empirical_p_value


@dataclass(frozen=True)
class EvalRecord:
    t: int
    y_true: float
    center: float
    lower: float
    upper: float
    covered: bool
    width: float
    winkler: float


def winkler_score(lower: float, upper: float, y: float, alpha: float) -> float:
    """Interval width plus a ``2/alpha`` penalty per unit the response escapes it.

    Plain arithmetic on the inputs, so ``fractions.Fraction`` arguments give an
    exact rational score.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    width = upper - lower
    if y < lower:
        return width + 2 * (lower - y) / alpha
    if y > upper:
        return width + 2 * (y - upper) / alpha
    return width


def score_interval(t: int, lower: float, upper: float, y: float, alpha: float, center=None) -> EvalRecord:
    if center is None:
        center = 0.5 * (lower + upper)
    return EvalRecord(
        t=t,
        y_true=float(y),
        center=float(center),
        lower=float(lower),
        upper=float(upper),
        covered=bool(lower <= y <= upper),
        width=float(upper - lower),
        winkler=winkler_score(lower, upper, y, alpha),
    )


def score_intervals(intervals, observed: Sequence[float], start: int = 0) -> list[EvalRecord]:
    """Score :class:`~enpi.core.PredictionInterval` objects against observations."""
    return [
        score_interval(start + k, iv.lower, iv.upper, y, iv.alpha, iv.center)
        for k, (iv, y) in enumerate(zip(intervals, observed))
    ]


def coverage_rate(records: Sequence[EvalRecord]) -> float:
    if len(records) == 0:
        raise ValueError("no records")
    return sum(r.covered for r in records) / len(records)


def mean_width(records: Sequence[EvalRecord]) -> float:
    if len(records) == 0:
        raise ValueError("no records")
    return math.fsum(r.width for r in records) / len(records)


def mean_winkler(records: Sequence[EvalRecord]) -> float:
    if len(records) == 0:
        raise ValueError("no records")
    return math.fsum(r.winkler for r in records) / len(records)


@dataclass(frozen=True)
class ExperimentReport:
    method: str
    regressor: str
    dataset: str
    alpha: float
    n_trials: int
    n_records: int
    coverage_mean: float
    coverage_sd: float
    width_mean: float
    width_sd: float
    winkler_mean: float
    winkler_sd: float

    FIELDS = (
        "method", "regressor", "dataset", "alpha", "n_trials", "n_records",
        "coverage_mean", "coverage_sd", "width_mean", "width_sd",
        "winkler_mean", "winkler_sd",
    )

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    vals = np.sort(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(vals)):
        return float(np.mean(vals)), math.nan
    mean = math.fsum(vals) / vals.size
    if vals.size < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((vals - mean) ** 2) / (vals.size - 1))


def aggregate(
    trials: Sequence[Sequence[EvalRecord]],
    method: str,
    alpha: float,
    regressor: str = "",
    dataset: str = "",
) -> ExperimentReport:
    """Mean and across-trial SD of per-trial coverage, width and Winkler score.

    Per-trial summaries are sorted before summation, so the result does not
    depend on record or trial order.
    """
    if not trials or any(len(t) == 0 for t in trials):
        raise ValueError("no records")
    cov = _mean_sd([coverage_rate(t) for t in trials])
    wid = _mean_sd([mean_width(t) for t in trials])
    wink = _mean_sd([mean_winkler(t) for t in trials])
    return ExperimentReport(
        method, regressor, dataset, float(alpha), len(trials), sum(len(t) for t in trials),
        cov[0], cov[1], wid[0], wid[1], wink[0], wink[1],
    )


def pvalue_uniformity_report(
    residual_stream: Iterable[tuple[Sequence[float], float]],
    alphas: Sequence[float] = tuple(np.round(np.arange(1, 10) / 10, 10)),
) -> dict[float, float]:
    """Map each alpha to ``P_hat(p <= alpha) - alpha`` over a residual stream.

    The stream yields ``(window, new_residual)`` pairs; each pair gives the
    empirical p-value of the new residual against its window.
    """
    pvals = np.array([empirical_p_value(w, e) for w, e in residual_stream])
    if pvals.size == 0:
        raise ValueError("empty residual stream")
    return {float(a): float(np.mean(pvals <= a) - a) for a in alphas}


@dataclass(frozen=True)
class EnsembleErrorReport:
    n_trials: int
    ensemble_mse: tuple[float, ...]
    member_mse: tuple[float, ...]
    ensemble_mae: tuple[float, ...]
    member_mae: tuple[float, ...]
    pointwise_violations: int
    n_points: int

    @property
    def mean_ensemble_mse(self) -> float:
        return math.fsum(self.ensemble_mse) / self.n_trials

    @property
    def mean_member_mse(self) -> float:
        return math.fsum(self.member_mse) / self.n_trials

    @property
    def frac_mse_no_worse(self) -> float:
        return sum(e <= m for e, m in zip(self.ensemble_mse, self.member_mse)) / self.n_trials

    @property
    def frac_mae_no_worse(self) -> float:
        return sum(e <= m for e, m in zip(self.ensemble_mae, self.member_mae)) / self.n_trials


def member_errors(y: np.ndarray, member_preds: np.ndarray):
    """Per-point errors of the mean ensemble and the average member.

    Returns ``(ens_abs, member_abs, ens_sq, member_sq)``, each of length n.
    Both sides are built from the same deviations ``y - f_b(x)`` with
    correctly rounded sums, so ``ens_abs <= member_abs`` holds exactly in
    floating point, just as it does in exact arithmetic.
    """
    dev = np.asarray(y, dtype=float)[:, None] - np.asarray(member_preds, dtype=float)
    B = dev.shape[1]
    ens_dev = np.array([math.fsum(row) for row in dev]) / B
    ens_abs = np.abs(ens_dev)
    member_abs = np.array([math.fsum(row) for row in np.abs(dev)]) / B
    ens_sq = ens_dev**2
    member_sq = np.array([math.fsum(row) for row in dev**2]) / B
    return ens_abs, member_abs, ens_sq, member_sq


def ensemble_mse_check(sim_config, regressor_spec, n_trials: int = 50, b_tilde: int = 100, seed: int = 0):
    """Compare the mean ensemble with its members on held-out points.

    Each trial simulates a fresh series from ``sim_config`` (seed derived from
    ``seed`` and the trial index), fits a bootstrap ensemble on its training
    segment and scores every member and the mean ensemble on the test segment.
    """
    from dataclasses import replace

    from .datagen import generate
    from .ensemble import derive_seed, fit_ensemble

    rows = []
    violations = 0
    n_points = 0
    for k in range(n_trials):
        data = generate(replace(sim_config, seed=derive_seed(seed, k, 0)))
        ens = fit_ensemble(data, regressor_spec, b_tilde, "mean", derive_seed(seed, k, 1))
        P = ens.member_predictions(data.X_test)
        ens_abs, mem_abs, ens_sq, mem_sq = member_errors(data.y_test, P)
        violations += int(np.count_nonzero(ens_abs > mem_abs))
        n_points += ens_abs.size
        rows.append((
            math.fsum(ens_sq) / ens_sq.size,
            math.fsum(mem_sq) / mem_sq.size,
            math.fsum(ens_abs) / ens_abs.size,
            math.fsum(mem_abs) / mem_abs.size,
        ))
    cols = list(zip(*rows))
    return EnsembleErrorReport(n_trials, *cols, violations, n_points)
