"""Method dispatch and repeated-trial experiments."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .baselines import run_icp, run_weighted_icp
from .core import Dataset
from .datagen import SimConfig, generate
from .ensemble import derive_seed, run_sequential
from .evaluation import EvalRecord, ExperimentReport, aggregate
from .regressors import RegressorSpec

METHODS = ("enpi", "icp", "wicp")
_METHOD_CODE = {m: i for i, m in enumerate(METHODS)}

DataSource = Union[Dataset, SimConfig]


def default_alpha_grid() -> tuple[float, ...]:
    """Ten values of alpha with ``1 - alpha`` equally spaced on [0.05, 0.95]."""
    return tuple(float(np.round(1.0 - c, 12)) for c in np.linspace(0.05, 0.95, 10))


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("ENPI_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MethodConfig:
    b_tilde: int = 100
    phi: str = "mean"
    center_mode: str = "loo_quantile"


def run_method(
    method: str,
    data: Dataset,
    spec: RegressorSpec,
    alpha: float,
    seed: int,
    config: MethodConfig = MethodConfig(),
) -> list[EvalRecord]:
    if method == "enpi":
        run = run_sequential(
            data, spec, config.b_tilde, config.phi, alpha, seed, config.center_mode
        )
    elif method == "icp":
        run = run_icp(data, spec, alpha, seed)
    elif method == "wicp":
        run = run_weighted_icp(data, spec, alpha, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    return run.records()


def trial_dataset(source: DataSource, seed: int, trial: int) -> Dataset:
    """Simulated sources get a fresh realization per trial; fixed data are reused."""
    if isinstance(source, SimConfig):
        return generate(replace(source, seed=derive_seed(source.seed, seed, trial)))
    return source


def run_trials(
    source: DataSource,
    methods: Sequence[str],
    spec: RegressorSpec,
    alpha: float,
    n_trials: int = 10,
    seed: int = 0,
    config: MethodConfig = MethodConfig(),
) -> dict[str, list[list[EvalRecord]]]:
    """Records per method, per trial.

    Every method sees the same data realization within a trial. Seeds are
    derived from ``(seed, trial, method)`` up front, so the result is
    independent of ``ENPI_THREADS``.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")

    def one_trial(k):
        data = trial_dataset(source, seed, k)
        return {
            m: run_method(m, data, spec, alpha, derive_seed(seed, k, _METHOD_CODE[m]), config)
            for m in methods
        }

    workers = min(n_threads(), n_trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_trial = list(pool.map(one_trial, range(n_trials)))
    else:
        per_trial = [one_trial(k) for k in range(n_trials)]
    return {m: [tr[m] for tr in per_trial] for m in methods}


def sweep(
    source: DataSource,
    methods: Sequence[str],
    spec: RegressorSpec,
    alphas: Sequence[float],
    n_trials: int = 10,
    seed: int = 0,
    config: MethodConfig = MethodConfig(),
    dataset_tag: str = "",
) -> list[ExperimentReport]:
    """One report per (alpha, method)."""
    if not alphas:
        raise ValueError("empty alpha grid")
    reports = []
    for a in alphas:
        results = run_trials(source, methods, spec, a, n_trials, seed, config)
        for m in methods:
            reports.append(aggregate(results[m], m, a, spec.family, dataset_tag))
    return reports
