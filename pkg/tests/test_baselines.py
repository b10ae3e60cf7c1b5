import numpy as np
import pytest

from nimo.baselines import (
    fit_mlp_baseline,
    lasso_cd,
    lasso_dual_gap,
    lasso_kkt_residual,
    lasso_null_penalty,
    lasso_objective,
    lasso_path,
    logistic_newton,
    ridge_regression,
    soft_threshold,
)
from nimo.errors import Diverged, MaxIterations
from nimo.mlp import NetworkConfig
from nimo.model import Task
from nimo.numerics import ridge_closed_form, sigmoid, standardize
from nimo.optimize import Optimizer, TrainConfig, TrainingData


def _regression_problem(rng: np.random.Generator, n: int = 40, d: int = 8) -> tuple[np.ndarray, np.ndarray]:
    X, _ = standardize(rng.normal(size=(n, d)))
    beta = np.zeros(d)
    beta[: d // 2] = rng.normal(scale=2.0, size=d // 2)
    y = X @ beta + 0.5 * rng.normal(size=n)
    return X, y - y.mean()


def _proximal_gradient(X: np.ndarray, y: np.ndarray, penalty: float, steps: int = 20000) -> np.ndarray:
    step = 1.0 / (2.0 * np.linalg.norm(X, 2) ** 2)
    beta = np.zeros(X.shape[1])
    for _ in range(steps):
        moved = beta - step * (-2.0 * X.T @ (y - X @ beta))
        beta = np.sign(moved) * np.maximum(np.abs(moved) - step * penalty, 0.0)
    return beta


def test_soft_threshold() -> None:
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0


def test_lasso_above_null_penalty_is_all_zero(rng: np.random.Generator) -> None:
    X, y = _regression_problem(rng)
    null = lasso_null_penalty(X, y)
    assert np.array_equal(lasso_cd(X, y, null).coefficients, np.zeros(8))
    assert np.array_equal(lasso_cd(X, y, 2.0 * null).coefficients, np.zeros(8))
    assert np.count_nonzero(lasso_cd(X, y, 0.9 * null).coefficients) >= 1


def test_lasso_without_penalty_is_least_squares(rng: np.random.Generator) -> None:
    X, y = _regression_problem(rng)
    fit = lasso_cd(X, y, 0.0)
    ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert np.max(np.abs(fit.coefficients - ols)) <= 1e-8
    assert fit.dual_gap == 0.0


def test_lasso_matches_proximal_gradient_objective(rng: np.random.Generator) -> None:
    X, y = _regression_problem(rng)
    penalty = 0.2 * lasso_null_penalty(X, y)
    fit = lasso_cd(X, y, penalty)
    oracle = _proximal_gradient(X, y, penalty)
    ours = lasso_objective(X, y, fit.coefficients, penalty)
    assert abs(ours - lasso_objective(X, y, oracle, penalty)) <= 1e-10 * max(1.0, ours)
    assert lasso_kkt_residual(X, y, fit.coefficients, penalty) <= 1e-8
    assert 0.0 <= fit.dual_gap <= 1e-6


def test_lasso_recovers_intercept(rng: np.random.Generator) -> None:
    X = rng.normal(loc=3.0, size=(30, 2))
    y = 5.0 + X @ np.array([1.0, -1.0])
    fit = lasso_cd(X, y, 0.0)
    assert fit.intercept == pytest.approx(5.0, abs=1e-6)
    assert np.allclose(fit.predict(X), y, atol=1e-6)


def test_lasso_dual_gap_is_non_negative(rng: np.random.Generator) -> None:
    X, y = _regression_problem(rng)
    penalty = 0.3 * lasso_null_penalty(X, y)
    for _ in range(10):
        assert lasso_dual_gap(X, y, rng.normal(size=8), penalty) >= 0.0


def test_lasso_max_iterations() -> None:
    rng = np.random.default_rng(5)
    base = rng.normal(size=(30, 1))
    X = base + 0.01 * rng.normal(size=(30, 4))
    y = X @ np.array([1.0, -1.0, 2.0, 0.5]) + rng.normal(size=30)
    with pytest.raises(MaxIterations):
        lasso_cd(X, y, 0.1, max_sweeps=1, tol=1e-12)


def test_lasso_path_support_shrinks_with_penalty(rng: np.random.Generator) -> None:
    X, y = _regression_problem(rng, n=60, d=10)
    null = lasso_null_penalty(X, y)
    penalties = [null * f for f in (0.01, 0.5, 0.05, 0.9, 0.2)]
    fits = lasso_path(X, y, penalties)
    assert [fit.penalty for fit in fits] == penalties

    smallest, largest = fits[0], fits[3]
    assert np.count_nonzero(smallest.coefficients) >= np.count_nonzero(largest.coefficients)
    assert np.sum(np.abs(smallest.coefficients)) > np.sum(np.abs(largest.coefficients))
    for fit in fits:
        cold = lasso_cd(X, y, fit.penalty)
        assert np.allclose(fit.coefficients, cold.coefficients, atol=1e-6)


def test_ridge_regression_matches_closed_form(rng: np.random.Generator) -> None:
    X, y = _regression_problem(rng)
    fit = ridge_regression(X, y, 2.0)
    assert np.allclose(fit.coefficients, ridge_closed_form(X, y, 2.0))
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)


def test_logistic_intercept_only_is_logit_of_mean() -> None:
    y = np.array([1.0] * 7 + [0.0] * 3)
    fit = logistic_newton(np.zeros((10, 1)), y, l2=1e-3)
    assert fit.intercept == pytest.approx(np.log(0.7 / 0.3), abs=1e-8)
    assert fit.coefficients[0] == 0.0


def test_logistic_large_l2_shrinks(rng: np.random.Generator) -> None:
    X = rng.normal(size=(50, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=50) > 0).astype(np.float64)
    fit = logistic_newton(X, y, l2=1e8)
    assert np.max(np.abs(fit.coefficients)) <= 1e-5


def test_logistic_matches_irls_oracle(rng: np.random.Generator) -> None:
    X = rng.normal(size=(60, 3))
    y = rng.binomial(1, sigmoid(0.3 + X @ np.array([1.0, -0.5, 0.0]))).astype(np.float64)
    fit = logistic_newton(X, y)

    design = np.hstack([np.ones((60, 1)), X])
    theta = np.zeros(4)
    for _ in range(100):
        pi = sigmoid(design @ theta)
        w = pi * (1.0 - pi)
        z = design @ theta + (y - pi) / w
        theta = np.linalg.solve(design.T @ (design * w[:, None]), design.T @ (w * z))
    assert fit.intercept == pytest.approx(theta[0], abs=1e-6)
    assert np.allclose(fit.coefficients, theta[1:], atol=1e-6)
    assert not fit.separable


def test_logistic_l1_satisfies_subgradient_condition(rng: np.random.Generator) -> None:
    X = rng.normal(size=(80, 5))
    y = rng.binomial(1, sigmoid(X @ np.array([2.0, -1.0, 0.0, 0.0, 0.3]))).astype(np.float64)
    l1, l2 = 3.0, 0.1
    fit = logistic_newton(X, y, l2=l2, l1=l1)
    residual = sigmoid(fit.intercept + X @ fit.coefficients) - y
    gradient = X.T @ residual + l2 * fit.coefficients
    assert abs(np.sum(residual)) <= 1e-7
    for value, slope in zip(fit.coefficients, gradient):
        if value != 0.0:
            assert abs(slope + l1 * np.sign(value)) <= 1e-7
        else:
            assert abs(slope) <= l1 + 1e-7

    null = 1.1 * np.max(np.abs(X.T @ (y - y.mean())))
    assert np.array_equal(logistic_newton(X, y, l2=l2, l1=null).coefficients, np.zeros(5))


def test_logistic_flags_separable_data(caplog: pytest.LogCaptureFixture) -> None:
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    fit = logistic_newton(X, y)
    assert fit.separable
    assert "separable" in caplog.text


def test_logistic_keeps_iterate_when_line_search_fails(
    monkeypatch: pytest.MonkeyPatch, rng: np.random.Generator, caplog: pytest.LogCaptureFixture
) -> None:
    X = rng.normal(size=(30, 2))
    y = rng.binomial(1, sigmoid(X @ np.array([1.0, -1.0]))).astype(np.float64)
    calls = []

    def uphill(design: np.ndarray, labels: np.ndarray, theta: np.ndarray, l2: float, l1: float) -> float:
        calls.append(theta.copy())
        return 0.0 if len(calls) == 1 else 1.0

    monkeypatch.setattr("nimo.baselines._logistic_objective", uphill)
    fit = logistic_newton(X, y, l2=0.1)
    assert fit.intercept == 0.0
    assert np.array_equal(fit.coefficients, np.zeros(2))
    assert len(calls) == 61
    assert "no decrease" in caplog.text


def test_logistic_rejects_negative_penalties() -> None:
    with pytest.raises(ValueError):
        logistic_newton(np.zeros((3, 1)), np.array([0.0, 1.0, 1.0]), l1=-1.0)


def _mlp_data(rng: np.random.Generator, y: np.ndarray) -> TrainingData:
    X, stats = standardize(rng.normal(size=(len(y), 2)))
    return TrainingData(X=X, y=y, stats=stats)


def test_mlp_constant_target(rng: np.random.Generator) -> None:
    data = _mlp_data(rng, np.full(50, 3.5))
    cfg = NetworkConfig(2, hidden1=4, hidden2=4)
    config = TrainConfig(max_iters=1500, learning_rate=0.05, optimizer=Optimizer.PLAIN_GD)
    fit = fit_mlp_baseline(data, cfg, config)
    X_raw = data.stats.invert(rng.normal(size=(20, 2)))
    assert np.max(np.abs(fit.predict(X_raw) - 3.5)) <= 1e-2


def test_mlp_is_deterministic_given_seed(rng: np.random.Generator) -> None:
    data = _mlp_data(rng, rng.normal(size=30))
    cfg = NetworkConfig(2, hidden1=4, hidden2=4)
    config = TrainConfig(max_iters=50, seed=11)
    first = fit_mlp_baseline(data, cfg, config)
    second = fit_mlp_baseline(data, cfg, config)
    assert np.array_equal(first.params.flatten(), second.params.flatten())
    assert len(first.history) == 50


def test_mlp_logistic_outputs_probabilities(rng: np.random.Generator) -> None:
    y = rng.binomial(1, 0.5, 40).astype(np.float64)
    data = _mlp_data(rng, y)
    fit = fit_mlp_baseline(data, NetworkConfig(2, hidden1=4, hidden2=4), TrainConfig(max_iters=20, task=Task.LOGISTIC))
    probabilities = fit.predict(data.stats.invert(data.X))
    assert fit.offset == 0.0
    assert np.all((probabilities > 0.0) & (probabilities < 1.0))


def test_mlp_early_stopping_on_validation(rng: np.random.Generator) -> None:
    data = _mlp_data(rng, rng.normal(size=30))
    X_val = rng.normal(size=(10, 2))
    data = TrainingData(X=data.X, y=data.y, stats=data.stats, X_val=X_val, y_val=rng.normal(size=10))
    config = TrainConfig(max_iters=5000, patience=5, learning_rate=0.05)
    fit = fit_mlp_baseline(data, NetworkConfig(2, hidden1=4, hidden2=4), config)
    assert len(fit.history) < 5000
    assert all(record.val_loss is not None for record in fit.history)


def test_mlp_non_finite_loss_diverges(monkeypatch: pytest.MonkeyPatch, rng: np.random.Generator) -> None:
    def broken(task: Task, y: np.ndarray, out: np.ndarray) -> tuple[float, np.ndarray]:
        return float("nan"), np.zeros_like(out)

    monkeypatch.setattr("nimo.baselines._mlp_loss", broken)
    with pytest.raises(Diverged):
        fit_mlp_baseline(_mlp_data(rng, rng.normal(size=10)), NetworkConfig(2), TrainConfig(max_iters=3))
