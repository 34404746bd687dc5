import numpy as np
import pytest

from enpi.baselines import (
    covariate_shift_weights,
    fit_logistic,
    logistic_objective,
    run_icp,
    run_weighted_icp,
    split_fit,
)
from enpi.core import Dataset, empirical_quantile, weighted_quantile
from enpi.datagen import SimConfig, generate
from enpi.evaluation import coverage_rate
from enpi.regressors import RegressorSpec

RIDGE = RegressorSpec("ridge")


def gd_logistic(X, labels, penalty, steps=200_000):
    """Plain full-batch gradient descent with a fixed step from the Lipschitz bound."""
    n, d = X.shape
    Xa = np.column_stack([X, np.ones(n)])
    L = 0.25 * np.linalg.eigvalsh(Xa.T @ Xa).max() + penalty
    theta = np.zeros(d + 1)
    reg = np.append(np.full(d, penalty), 0.0)
    for _ in range(steps):
        p = 1.0 / (1.0 + np.exp(-(Xa @ theta)))
        g = Xa.T @ (p - labels) + reg * theta
        theta -= g / L
        if np.linalg.norm(g) < 1e-11:
            break
    return theta[:d], theta[d]


def linear_data(T=80, T1=60, d=4, noise=1.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((T + T1, d))
    y = X @ np.ones(d) + noise * rng.standard_normal(T + T1)
    return Dataset(X, y, T, T1)


def test_logistic_matches_gradient_descent_oracle():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 3))
    labels = (X @ [1.0, -2.0, 0.5] + rng.standard_normal(60) > 0).astype(float)
    m = fit_logistic(X, labels, ridge_penalty=0.5)
    w, b = gd_logistic(X, labels, 0.5)
    assert m.converged
    assert np.max(np.abs(np.append(m.coef, m.intercept) - np.append(w, b))) <= 1e-6


def test_logistic_symmetric_labels():
    X = np.array([[-1.0], [1.0], [-2.0], [2.0]])
    m = fit_logistic(X, [0, 1, 0, 1], ridge_penalty=1.0)
    assert abs(m.intercept) < 1e-10 and m.coef[0] > 0
    # mirrored labels flip the sign of the slope
    m2 = fit_logistic(X, [1, 0, 1, 0], ridge_penalty=1.0)
    assert m2.coef[0] == pytest.approx(-m.coef[0], rel=1e-10)


def test_logistic_null_signal_shrinks():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((400, 5))
    labels = rng.integers(0, 2, 400).astype(float)
    m = fit_logistic(X, labels, ridge_penalty=5.0)
    assert np.max(np.abs(m.coef)) < 0.3


def test_logistic_objective_decreases_to_minimum():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((30, 2))
    labels = (rng.random(30) < 0.3).astype(float)
    m = fit_logistic(X, labels, 1.0)
    best = logistic_objective(m.coef, m.intercept, X, labels, 1.0)
    for _ in range(20):
        dw = rng.standard_normal(2) * 1e-3
        assert logistic_objective(m.coef + dw, m.intercept, X, labels, 1.0) >= best


def test_logistic_errors():
    with pytest.raises(ValueError, match="degenerate labels"):
        fit_logistic(np.zeros((3, 1)), [1, 1, 1])
    with pytest.raises(ValueError):
        fit_logistic(np.zeros((3, 1)), [0, 1, 2])
    with pytest.raises(ValueError):
        fit_logistic(np.zeros((3, 1)), [0, 1, 0], ridge_penalty=0.0)


def test_covariate_shift_weights_single_test_point():
    rng = np.random.default_rng(3)
    X_cal = rng.standard_normal((100, 3))
    x_test = np.array([2.0, 0.0, 0.0])
    w_cal, w_test, model = covariate_shift_weights(X_cal, x_test)
    assert model.converged
    assert w_cal.shape == (100,) and np.all(w_cal > 0) and 0 < w_test <= 1
    # calibration points on the test point's side get more weight
    assert np.corrcoef(X_cal[:, 0], np.log(w_cal))[0, 1] > 0.9


def test_icp_noiseless():
    data = linear_data(noise=0.0)
    run = run_icp(data, RIDGE, alpha=0.1, seed=0)
    recs = run.records()
    assert len(recs) == data.test_len
    assert max(r.width for r in recs) < 1e-2
    assert max(abs(r.y_true - r.center) for r in recs) < 1e-2


def test_split_sizes_and_hygiene():
    data = linear_data(T=81)
    s = split_fit(data, RIDGE, seed=4)
    assert len(s.calibration_window) == s.calibration_idx.size == 40
    assert s.proper_idx.size == 41
    assert np.intersect1d(s.proper_idx, s.calibration_idx).size == 0
    # calibration responses never reach the fit: perturbing them changes nothing
    y = data.response.copy()
    y[s.calibration_idx] += 100.0
    s2 = split_fit(Dataset(data.features, y, data.train_len, data.test_len), RIDGE, seed=4)
    np.testing.assert_array_equal(s.proper_model.coef, s2.proper_model.coef)
    with pytest.raises(ValueError, match="insufficient data"):
        split_fit(Dataset(np.zeros((5, 1)), np.arange(5.0), 3, 2), RIDGE, 0)


def test_icp_half_width_is_window_quantile():
    data = linear_data()
    run = run_icp(data, RIDGE, alpha=0.2, seed=5)
    s = split_fit(data, RIDGE, seed=5)
    window = list(s.calibration_window.values())
    preds = s.proper_model.predict_many(data.X_test)
    for iv, y, f in zip(run.intervals, run.observed, preds):
        assert iv.half_width == empirical_quantile(window, 0.8)
        window = window[1:] + [abs(y - f)]


def test_weighted_quantile_with_uniform_weights_matches_icp():
    # uniform weights plus a unit +inf mass reproduce the rank ceil((1-a)(n+1))
    rng = np.random.default_rng(6)
    for n in (9, 19, 40):
        r = rng.random(n)
        for a in (0.1, 0.2, 0.5):
            vals = np.append(r, np.inf)
            wq = weighted_quantile(vals, np.ones(n + 1), 1 - a)
            assert wq == empirical_quantile(r, 1 - a)


def test_wicp_no_shift_close_to_icp():
    # A test point that alone holds more than alpha of the weight yields an
    # infinite interval; that is rare without shift and excluded from widths.
    cov_w, cov_i, wid_w, wid_i, n_inf = [], [], [], [], 0
    for k in range(3):
        data = generate(SimConfig(p=20, rho=0.0, seed=k))
        w = run_weighted_icp(data, RIDGE, 0.1, seed=k)
        i = run_icp(data, RIDGE, 0.1, seed=k)
        assert w.fallback_steps == 0
        hw = np.array([iv.half_width for iv in w.intervals])
        n_inf += int(np.isinf(hw).sum())
        cov_w.append(coverage_rate(w.records()))
        cov_i.append(coverage_rate(i.records()))
        wid_w.append(2 * np.median(hw))
        wid_i.append(2 * np.median([iv.half_width for iv in i.intervals]))
    assert n_inf <= 0.02 * 600
    assert abs(np.mean(wid_w) / np.mean(wid_i) - 1) <= 0.10
    assert abs(np.mean(cov_w) - np.mean(cov_i)) <= 0.05


@pytest.mark.parametrize("runner", [run_icp, run_weighted_icp])
def test_baselines_no_look_ahead(runner):
    data = linear_data(T=40, T1=30)
    full = runner(data, RIDGE, 0.1, 7)
    cut = 12
    y = data.response.copy()
    y[data.train_len + cut :] = -1e6
    trunc = runner(Dataset(data.features, y, data.train_len, data.test_len), RIDGE, 0.1, 7)
    for a, b in zip(full.intervals[: cut + 1], trunc.intervals[: cut + 1]):
        assert (a.center, a.half_width) == (b.center, b.half_width)
