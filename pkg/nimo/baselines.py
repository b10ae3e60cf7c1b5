"""Reference methods: Lasso, ridge, Newton logistic regression and a plain MLP."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from nimo.errors import DimensionMismatch, Diverged, MaxIterations
from nimo.mlp import HIDDEN1, HIDDEN2, NetworkConfig, NetworkParams
from nimo.model import Task, TraceRecord
from nimo.numerics import (
    STREAM_DROPOUT,
    STREAM_INIT,
    SeededRng,
    StandardizationStats,
    as_matrix,
    logistic_nll,
    ridge_closed_form,
    sigmoid,
    solve_spd,
)
from nimo.optimize import OptimizerState, TrainConfig, TrainingData, optimizer_step


_logger = logging.getLogger(__name__)

SEPARABLE_NORM = 1e4
SEPARABLE_MARGIN = 10.0
DROPOUT_RATE = 0.6


@dataclass(frozen=True)
class LassoFit:
    intercept: float
    coefficients: np.ndarray
    penalty: float
    dual_gap: float
    iterations: int = 0
    separable: bool = False

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + as_matrix(X) @ self.coefficients

    def predict(self, X: np.ndarray, task: Task = Task.REGRESSION) -> np.ndarray:
        eta = self.decision_function(X)
        return sigmoid(eta) if task is Task.LOGISTIC else eta


def soft_threshold(value: float, threshold: float) -> float:
    return float(np.sign(value) * max(abs(value) - threshold, 0.0))


def lasso_objective(X: np.ndarray, y: np.ndarray, beta: np.ndarray, penalty: float) -> float:
    residual = y - X @ beta
    return float(residual @ residual + penalty * np.sum(np.abs(beta)))


def lasso_null_penalty(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty with an all-zero solution, 2‖Xᵀy‖∞ for centered data."""
    X, y = _centered(X, y)[:2]
    return float(2.0 * np.max(np.abs(X.T @ y)))


def lasso_kkt_residual(X: np.ndarray, y: np.ndarray, beta: np.ndarray, penalty: float) -> float:
    gradient = -2.0 * X.T @ (y - X @ beta)
    active = beta != 0
    violation = np.where(
        active,
        np.abs(gradient + penalty * np.sign(beta)),
        np.maximum(np.abs(gradient) - penalty, 0.0),
    )
    return float(np.max(violation, initial=0.0))


def lasso_dual_gap(X: np.ndarray, y: np.ndarray, beta: np.ndarray, penalty: float) -> float:
    """Duality gap of ‖y − Xβ‖² + p‖β‖₁ using the rescaled residual as dual point."""
    if penalty <= 0:
        return 0.0
    residual = y - X @ beta
    correlation = float(np.max(np.abs(X.T @ residual), initial=0.0))
    scale = 1.0 if correlation == 0 else min(1.0, 0.5 * penalty / correlation)
    theta = scale * residual
    primal = 0.5 * float(residual @ residual) + 0.5 * penalty * float(np.sum(np.abs(beta)))
    dual = 0.5 * float(y @ y) - 0.5 * float((y - theta) @ (y - theta))
    return max(2.0 * (primal - dual), 0.0)


def _centered(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, y has {y.shape[0]}")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    return X - x_mean, y - y_mean, x_mean, y_mean


def lasso_cd(
    X: np.ndarray,
    y: np.ndarray,
    penalty: float,
    beta0: Optional[np.ndarray] = None,
    max_sweeps: int = 100000,
    tol: float = 1e-8,
) -> LassoFit:
    """Cyclic coordinate descent for ‖y − Xβ‖² + penalty·‖β‖₁.

    X and y are centered internally and the intercept is recovered from the
    means. Stops when the KKT residual drops below ``tol``.
    """
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    Xc, yc, x_mean, y_mean = _centered(X, y)
    d = Xc.shape[1]
    beta = np.zeros(d) if beta0 is None else np.asarray(beta0, dtype=np.float64).copy()
    norms = np.sum(Xc * Xc, axis=0)
    residual = yc - Xc @ beta
    half = 0.5 * penalty

    for sweep in range(1, max_sweeps + 1):
        for k in range(d):
            if norms[k] == 0:
                beta[k] = 0.0
                continue
            old = beta[k]
            rho = Xc[:, k] @ residual + norms[k] * old
            beta[k] = soft_threshold(rho, half) / norms[k]
            if beta[k] != old:
                residual -= Xc[:, k] * (beta[k] - old)
        if lasso_kkt_residual(Xc, yc, beta, penalty) <= tol:
            return LassoFit(
                intercept=y_mean - float(x_mean @ beta),
                coefficients=beta,
                penalty=penalty,
                dual_gap=lasso_dual_gap(Xc, yc, beta, penalty),
                iterations=sweep,
            )

    raise MaxIterations(f"lasso did not reach KKT residual {tol:g} in {max_sweeps} sweeps")


def lasso_path(X: np.ndarray, y: np.ndarray, penalties: Sequence[float], tol: float = 1e-8) -> list[LassoFit]:
    """Fits for every penalty, warm-started from the next larger one.

    Results come back in the order of ``penalties``.
    """
    order = np.argsort(penalties)[::-1]
    fits: dict[int, LassoFit] = {}
    beta = None
    for index in order:
        fit = lasso_cd(X, y, float(penalties[index]), beta0=beta, tol=tol)
        fits[int(index)] = fit
        beta = fit.coefficients
    return [fits[i] for i in range(len(penalties))]


def ridge_regression(X: np.ndarray, y: np.ndarray, lam: float) -> LassoFit:
    Xc, yc, x_mean, y_mean = _centered(X, y)
    beta = ridge_closed_form(Xc, yc, lam)
    return LassoFit(
        intercept=y_mean - float(x_mean @ beta),
        coefficients=beta,
        penalty=lam,
        dual_gap=0.0,
    )


# ---------------------------------------------------------------------------
# logistic regression


def _logistic_parts(
    design: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    l2: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of NLL + (l2/2)‖β‖², first entry of theta unpenalized."""
    pi = sigmoid(design @ theta)
    ridge = np.full(theta.shape[0], l2)
    ridge[0] = 0.0
    gradient = design.T @ (pi - y) + ridge * theta
    hessian = design.T @ (design * (pi * (1.0 - pi))[:, None])
    hessian[np.diag_indices_from(hessian)] += ridge
    return gradient, hessian


def _logistic_objective(design: np.ndarray, y: np.ndarray, theta: np.ndarray, l2: float, l1: float) -> float:
    beta = theta[1:]
    return logistic_nll(y, design @ theta) + 0.5 * l2 * float(beta @ beta) + l1 * float(np.sum(np.abs(beta)))


def _stationarity(gradient: np.ndarray, theta: np.ndarray, l1: float) -> float:
    beta = theta[1:]
    smooth = gradient[1:]
    violation = np.where(
        beta != 0,
        np.abs(smooth + l1 * np.sign(beta)),
        np.maximum(np.abs(smooth) - l1, 0.0),
    )
    return max(abs(float(gradient[0])), float(np.max(violation, initial=0.0)))


def _proximal_newton_direction(
    hessian: np.ndarray,
    gradient: np.ndarray,
    theta: np.ndarray,
    l1: float,
    sweeps: int = 1000,
) -> np.ndarray:
    # minimize ½vᵀHv − (Hθ − g)ᵀv + l1‖v[1:]‖₁ by coordinate descent
    target = hessian @ theta - gradient
    v = theta.copy()
    for _ in range(sweeps):
        largest = 0.0
        for k in range(v.shape[0]):
            old = v[k]
            rho = target[k] - hessian[k] @ v + hessian[k, k] * old
            threshold = 0.0 if k == 0 else l1
            v[k] = soft_threshold(rho, threshold) / hessian[k, k]
            largest = max(largest, abs(v[k] - old))
        if largest < 1e-14:
            break
    return v - theta


def logistic_newton(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
    l1: float = 0.0,
    max_iters: int = 100,
    tol: float = 1e-8,
) -> LassoFit:
    """Penalized logistic regression, NLL + (l2/2)‖β‖² + l1‖β‖₁.

    Plain Newton with backtracking for l1 = 0, proximal Newton otherwise.
    The intercept is never penalized. Separable data (coefficients beyond
    1e4 in magnitude) stops the iteration and flags the fit.
    """
    if l1 < 0 or l2 < 0:
        raise ValueError("penalties must be non-negative")
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    theta = np.zeros(design.shape[1])
    objective = _logistic_objective(design, y, theta, l2, l1)

    for iteration in range(1, max_iters + 1):
        gradient, hessian = _logistic_parts(design, y, theta, l2)
        if _stationarity(gradient, theta, l1) <= tol:
            separable = _all_rows_confident(design, y, theta)
            if separable:
                _logger.warning("every training row fit with margin above %g: data look separable", SEPARABLE_MARGIN)
            return _logistic_fit(theta, l1, iteration - 1, separable=separable)
        if l1 > 0:
            direction = _proximal_newton_direction(hessian, gradient, theta, l1)
        else:
            direction = -solve_spd(hessian, gradient)

        step = 1.0
        for _ in range(60):
            candidate = theta + step * direction
            value = _logistic_objective(design, y, candidate, l2, l1)
            if value <= objective:
                break
            step *= 0.5
        else:
            _logger.warning(
                "logistic line search found no decrease at iteration %d; keeping the previous iterate", iteration
            )
            return _logistic_fit(theta, l1, iteration - 1)
        theta, objective = candidate, value

        if np.max(np.abs(theta[1:]), initial=0.0) > SEPARABLE_NORM:
            _logger.warning("logistic coefficients exceed %.0e: data look separable", SEPARABLE_NORM)
            return _logistic_fit(theta, l1, iteration, separable=True)

    gradient, _ = _logistic_parts(design, y, theta, l2)
    _logger.warning(
        "logistic Newton stopped after %d iterations with stationarity %.2e",
        max_iters, _stationarity(gradient, theta, l1),
    )
    return _logistic_fit(theta, l1, max_iters)


def _all_rows_confident(design: np.ndarray, y: np.ndarray, theta: np.ndarray) -> bool:
    # a finite optimum leaves some row misclassified or near the boundary
    margins = (2.0 * y - 1.0) * (design @ theta)
    return bool(np.min(margins) > SEPARABLE_MARGIN)


def _logistic_fit(theta: np.ndarray, penalty: float, iterations: int, separable: bool = False) -> LassoFit:
    return LassoFit(
        intercept=float(theta[0]),
        coefficients=theta[1:].copy(),
        penalty=penalty,
        dual_gap=0.0,
        iterations=iterations,
        separable=separable,
    )


# ---------------------------------------------------------------------------
# MLP baseline


@dataclass(frozen=True)
class MlpBaselineFit:
    """Standalone network with the correction network's layers, minus encoding."""

    params: NetworkParams
    task: Task
    offset: float
    stats: StandardizationStats
    history: tuple[TraceRecord, ...] = field(default=(), repr=False)

    def decision_function(self, X_raw: np.ndarray) -> np.ndarray:
        hidden = _mlp_forward(self.params, self.stats.apply(X_raw), None)
        return self.offset + hidden.out

    def predict(self, X_raw: np.ndarray) -> np.ndarray:
        eta = self.decision_function(X_raw)
        return sigmoid(eta) if self.task is Task.LOGISTIC else eta


@dataclass
class _MlpTrace:
    X: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    m1: Optional[np.ndarray]
    a2: np.ndarray
    h2: np.ndarray
    m2: Optional[np.ndarray]
    out: np.ndarray


def _dropout_mask(rng: Optional[SeededRng], shape: tuple[int, ...]) -> Optional[np.ndarray]:
    if rng is None:
        return None
    keep = 1.0 - DROPOUT_RATE
    return (rng.uniform(0.0, 1.0, shape) < keep) / keep


def _mlp_forward(params: NetworkParams, X: np.ndarray, rng: Optional[SeededRng]) -> _MlpTrace:
    X = as_matrix(X)
    a1 = X @ params.W1.T + params.b1
    h1 = HIDDEN1.fn(a1)
    m1 = _dropout_mask(rng, h1.shape)
    a2 = (h1 if m1 is None else h1 * m1) @ params.W2.T + params.b2
    h2 = HIDDEN2.fn(a2)
    m2 = _dropout_mask(rng, h2.shape)
    out = ((h2 if m2 is None else h2 * m2) @ params.W3.T + params.b3)[:, 0]
    return _MlpTrace(X, a1, h1, m1, a2, h2, m2, out)


def _mlp_backward(params: NetworkParams, trace: _MlpTrace, d_out: np.ndarray) -> NetworkParams:
    h2_used = trace.h2 if trace.m2 is None else trace.h2 * trace.m2
    dW3 = d_out[None, :] @ h2_used
    db3 = np.array([d_out.sum()])
    dh2 = np.outer(d_out, params.W3[0])
    if trace.m2 is not None:
        dh2 = dh2 * trace.m2
    da2 = dh2 * HIDDEN2.grad(trace.a2, trace.h2)

    h1_used = trace.h1 if trace.m1 is None else trace.h1 * trace.m1
    dW2 = da2.T @ h1_used
    db2 = da2.sum(axis=0)
    dh1 = da2 @ params.W2
    if trace.m1 is not None:
        dh1 = dh1 * trace.m1
    da1 = dh1 * HIDDEN1.grad(trace.a1, trace.h1)
    dW1 = da1.T @ trace.X
    db1 = da1.sum(axis=0)
    return NetworkParams(params.input_dim, dW1, db1, dW2, db2, dW3, db3)


def _mlp_loss(task: Task, y: np.ndarray, out: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss and its derivative wrt the network output."""
    n = len(y)
    if task is Task.LOGISTIC:
        return logistic_nll(y, out) / n, (sigmoid(out) - y) / n
    residual = out - y
    return float(residual @ residual) / n, 2.0 * residual / n


def _init_baseline(d: int, cfg: NetworkConfig, rng: SeededRng) -> NetworkParams:
    sizes = [(cfg.hidden1, d), (cfg.hidden2, cfg.hidden1), (1, cfg.hidden2)]
    arrays = []
    for fan_out, fan_in in sizes:
        bound = 1.0 / np.sqrt(fan_in)
        arrays.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        arrays.append(np.zeros(fan_out))
    return NetworkParams(d, *arrays)


def fit_mlp_baseline(data: TrainingData, cfg: NetworkConfig, config: TrainConfig) -> MlpBaselineFit:
    """Train the dropout MLP on standardized rows.

    Regression targets are centered and the mean is kept as an output
    offset. Full-batch steps, early stopping on validation loss.
    """
    X = as_matrix(data.X)
    y = np.asarray(data.y, dtype=np.float64)
    offset = float(np.mean(y)) if config.task is Task.REGRESSION else 0.0
    target = y - offset

    params = _init_baseline(X.shape[1], cfg, SeededRng(config.seed, STREAM_INIT))
    dropout_rng = SeededRng(config.seed, STREAM_DROPOUT)
    state = OptimizerState()
    best: Optional[NetworkParams] = None
    best_loss = np.inf
    stale = 0
    history: list[TraceRecord] = []

    for iteration in range(config.max_iters):
        trace = _mlp_forward(params, X, dropout_rng)
        loss, d_out = _mlp_loss(config.task, target, trace.out)
        if not np.isfinite(loss):
            raise Diverged(iteration)

        val_loss = None
        if data.has_validation:
            val_out = _mlp_forward(params, data.X_val, None).out
            val_loss, _ = _mlp_loss(config.task, np.asarray(data.y_val) - offset, val_out)
        history.append(TraceRecord(iteration, loss, val_loss, X.shape[1]))

        if val_loss is not None:
            if val_loss < best_loss:
                best, best_loss, stale = params.copy(), val_loss, 0
            else:
                stale += 1
                if stale >= config.patience:
                    _logger.info("mlp baseline early stop at iteration %d", iteration)
                    break

        grads = _mlp_backward(params, trace, d_out)
        params = params.unflatten(optimizer_step(params.flatten(), grads.flatten(), config, state))

    return MlpBaselineFit(
        params=best if best is not None else params,
        task=config.task,
        offset=offset,
        stats=data.stats,
        history=tuple(history),
    )
