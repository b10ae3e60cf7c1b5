"""Profile-likelihood training of NIMO.

The linear coefficients are reparametrized as β = c ∘ γ. For a fixed
network and scales c, γ has a closed form (a ridge solve for regression, a
weighted ridge solve per IRLS step for logistic regression), so only the
network weights and c are moved by first-order steps.
"""

import contextlib
import json
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import IO, Iterator, Optional

import numpy as np

from nimo.errors import DimensionMismatch, Diverged, NonFinite
from nimo.mlp import (
    NetworkConfig,
    NetworkGradients,
    NetworkParams,
    backward,
    forward_matrix,
    group_penalty,
    init_params,
    zero_params,
)
from nimo.model import (
    ZERO_THRESHOLD,
    FittedModel,
    Task,
    TraceRecord,
    apply_corrections,
)
from nimo.numerics import (
    STREAM_INIT,
    STREAM_NOISE,
    SeededRng,
    StandardizationStats,
    as_matrix,
    logistic_nll,
    ridge_closed_form,
    sigmoid,
    solve_spd,
)


_logger = logging.getLogger(__name__)

C_FLOOR = 1e-8
PI_CLAMP = 1e-12
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
REFRESH_IRLS_STEPS = 50
REFRESH_IRLS_TOL = 1e-12
POLISH_ITERS = 5000


class Optimizer(Enum):
    PLAIN_GD = "plain_gd"
    ADAPTIVE_MOMENTS = "adaptive_moments"


class GradientMode(Enum):
    STOP_GRADIENT = "stop_gradient"
    THROUGH_SOLVE = "through_solve"


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 2000
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 50
    optimizer: Optimizer = Optimizer.ADAPTIVE_MOMENTS
    task: Task = Task.REGRESSION
    gradient_mode: GradientMode = GradientMode.STOP_GRADIENT
    freeze_network: bool = False
    freeze_scales: bool = False
    trace_path: Optional[Path] = None
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")

    def to_dict(self) -> dict[str, object]:
        return {
            "max_iters": self.max_iters,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "patience": self.patience,
            "optimizer": self.optimizer.value,
            "task": self.task.value,
            "gradient_mode": self.gradient_mode.value,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "TrainConfig":
        fields = dict(payload)
        for name, kind in (("optimizer", Optimizer), ("task", Task), ("gradient_mode", GradientMode)):
            if name in fields:
                fields[name] = kind(fields[name])
        if fields.get("trace_path") is not None:
            fields["trace_path"] = Path(fields["trace_path"])
        return cls(**fields)


@dataclass(frozen=True)
class PenaltyState:
    c: np.ndarray
    gamma: np.ndarray
    lam: float = 0.1
    mu: float = 0.01
    delta: float = 1.0
    lam_group: float = 0.1

    def __post_init__(self) -> None:
        if np.any(self.c <= 0):
            raise ValueError("scales c must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.lam <= 0 or self.mu < 0 or self.lam_group < 0:
            raise ValueError("penalties must be non-negative and lam positive")

    @classmethod
    def initial(
        cls,
        d: int,
        lam: float = 0.1,
        mu: float = 0.01,
        delta: float = 1.0,
        lam_group: float = 0.1,
    ) -> "PenaltyState":
        return cls(np.ones(d), np.zeros(d), lam, mu, delta, lam_group)

    @property
    def beta(self) -> np.ndarray:
        return self.c * self.gamma


@dataclass(frozen=True)
class IrlsState:
    eta: np.ndarray
    pi: np.ndarray
    w: np.ndarray
    z: np.ndarray


@dataclass
class OptimizerState:
    step: int = 0
    first: Optional[np.ndarray] = None
    second: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TrainingData:
    """Standardized training rows plus an optional validation block."""

    X: np.ndarray
    y: np.ndarray
    stats: StandardizationStats
    X_val: Optional[np.ndarray] = None
    y_val: Optional[np.ndarray] = None
    feature_names: tuple[str, ...] = ()

    @property
    def has_validation(self) -> bool:
        return self.X_val is not None and len(self.X_val) > 0


@dataclass(frozen=True)
class ProfileEvaluation:
    loss: float
    gamma: np.ndarray
    beta: np.ndarray
    grad_c: np.ndarray
    grad_G: np.ndarray


@dataclass(frozen=True)
class AdaptiveRidgeFit:
    beta: np.ndarray
    c: np.ndarray
    gamma: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class _Snapshot:
    params: NetworkParams
    c: np.ndarray
    gamma: np.ndarray
    intercept: float
    iteration: int


# ---------------------------------------------------------------------------
# closed forms and losses


def scale_penalty(c: np.ndarray, mu: float, delta: float) -> float:
    """μ̃ Σ c^{2δ}; δ = 1 is the plain sum of squares."""
    if delta == 1.0:
        return float(mu * np.sum(c * c))
    return float(mu * np.sum(c ** (2.0 * delta)))


def scale_penalty_grad(c: np.ndarray, mu: float, delta: float) -> np.ndarray:
    if delta == 1.0:
        return 2.0 * mu * c
    return 2.0 * delta * mu * c ** (2.0 * delta - 1.0)


def gamma_closed_form(B: np.ndarray, c: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """γ̂ = (D_c BᵀB D_c + λI)⁻¹ D_c Bᵀ y."""
    c = np.asarray(c, dtype=np.float64)
    if np.any(c <= 0):
        raise ValueError("scales c must be positive")
    return ridge_closed_form(as_matrix(B) * c, y, lam)


def profile_loss_regression(
    B: np.ndarray,
    y: np.ndarray,
    beta: np.ndarray,
    c: np.ndarray,
    mu: float,
    delta: float,
) -> float:
    residual = y - B @ beta
    return float(residual @ residual) + scale_penalty(c, mu, delta)


def profile_regression(
    X: np.ndarray,
    G: np.ndarray,
    y: np.ndarray,
    penalty: PenaltyState,
    mode: GradientMode = GradientMode.STOP_GRADIENT,
) -> ProfileEvaluation:
    """Profiled loss and its gradients wrt c and the correction matrix G.

    In stop-gradient mode the objective is ‖y − BD_cγ̂‖² + λ‖γ̂‖² + μ̃Σc^{2δ};
    γ̂ minimizes it, so holding γ̂ fixed gives its exact gradient. In
    through-solve mode the objective drops λ‖γ̂‖² and the dependence of γ̂ on
    (c, G) is differentiated with one adjoint solve.
    """
    c = penalty.c
    B = apply_corrections(X, G)
    C = B * c
    gamma = ridge_closed_form(C, y, penalty.lam)
    beta = c * gamma
    residual = y - B @ beta
    loss = profile_loss_regression(B, y, beta, c, penalty.mu, penalty.delta)

    d_C = -2.0 * np.outer(residual, gamma)
    if mode is GradientMode.STOP_GRADIENT:
        loss += penalty.lam * float(gamma @ gamma)
    else:
        gram = C.T @ C
        gram[np.diag_indices_from(gram)] += penalty.lam
        adjoint = solve_spd(gram, -2.0 * C.T @ residual)
        d_C += np.outer(residual, adjoint) - np.outer(C @ adjoint, gamma)

    grad_c = np.sum(d_C * B, axis=0) + scale_penalty_grad(c, penalty.mu, penalty.delta)
    grad_G = d_C * c * X
    return ProfileEvaluation(loss, gamma, beta, grad_c, grad_G)


def regression_objective(
    params: NetworkParams,
    cfg: NetworkConfig,
    X: np.ndarray,
    y: np.ndarray,
    penalty: PenaltyState,
    mode: GradientMode = GradientMode.STOP_GRADIENT,
    rng: Optional[SeededRng] = None,
) -> tuple[ProfileEvaluation, NetworkGradients]:
    """Full training objective (profile loss plus group penalty) with gradients."""
    G, cache = forward_matrix(params, cfg, X, rng)
    evaluation = profile_regression(X, G, y, penalty, mode)
    group_value, group_grads = group_penalty(params, penalty.lam_group)
    grads = backward(cache, evaluation.grad_G) + group_grads
    return replace(evaluation, loss=evaluation.loss + group_value), grads


def irls_working_quantities(
    B: np.ndarray,
    beta: np.ndarray,
    y: np.ndarray,
    intercept: float = 0.0,
) -> IrlsState:
    eta = intercept + as_matrix(B) @ beta
    pi = np.clip(sigmoid(eta), PI_CLAMP, 1.0 - PI_CLAMP)
    w = pi * (1.0 - pi)
    z = eta + (y - pi) / w
    return IrlsState(eta=eta, pi=pi, w=w, z=z)


def irls_gamma_update(
    B: np.ndarray,
    c: np.ndarray,
    state: IrlsState,
    lam: float,
    fit_intercept: bool = False,
) -> tuple[float, np.ndarray]:
    """Weighted ridge step (X̃ᵀWX̃ + λI)⁻¹X̃ᵀWz with X̃ = B D_c.

    With ``fit_intercept`` a leading unpenalized column of ones is added.
    Returns ``(intercept, gamma)``; the intercept is 0 otherwise.
    """
    design = as_matrix(B) * c
    if fit_intercept:
        design = np.hstack([np.ones((design.shape[0], 1)), design])
    weighted = design * state.w[:, None]
    gram = design.T @ weighted
    penalized = np.arange(1 if fit_intercept else 0, design.shape[1])
    gram[penalized, penalized] += lam
    solution = solve_spd(gram, weighted.T @ state.z)
    if fit_intercept:
        return float(solution[0]), solution[1:]
    return 0.0, solution


def optimizer_step(
    values: np.ndarray,
    gradients: np.ndarray,
    config: TrainConfig,
    state: OptimizerState,
    lower_bounds: Optional[np.ndarray] = None,
) -> np.ndarray:
    """One first-order update of a flat parameter vector.

    ``state`` carries the moment estimates and is updated in place.
    Entries are projected onto ``lower_bounds`` after the step.
    """
    values = np.asarray(values, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    if values.shape != gradients.shape:
        raise DimensionMismatch(f"values {values.shape} and gradients {gradients.shape} differ")

    rate = config.learning_rate
    if config.optimizer is Optimizer.PLAIN_GD:
        updated = values - rate * gradients
    else:
        if state.first is None or state.second is None:
            state.first = np.zeros_like(values)
            state.second = np.zeros_like(values)
        state.step += 1
        state.first = ADAM_BETA1 * state.first + (1.0 - ADAM_BETA1) * gradients
        state.second = ADAM_BETA2 * state.second + (1.0 - ADAM_BETA2) * gradients * gradients
        first_hat = state.first / (1.0 - ADAM_BETA1 ** state.step)
        second_hat = state.second / (1.0 - ADAM_BETA2 ** state.step)
        updated = values - rate * first_hat / (np.sqrt(second_hat) + ADAM_EPS)

    if lower_bounds is not None:
        updated = np.maximum(updated, lower_bounds)
    return updated


# ---------------------------------------------------------------------------
# adaptive ridge without a network


def adaptive_ridge(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    mu: float,
    max_iters: int = 20000,
    tol: float = 1e-12,
) -> AdaptiveRidgeFit:
    """Alternate the closed-form γ and c ridge solves for a fixed design.

    Minimizes ‖y − XD_cγ‖² + λ‖γ‖² + μ̃‖c‖², whose β = c∘γ solves the Lasso
    with penalty 2√(λμ̃). Signs are kept in γ so that c stays positive.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if mu <= 0:
        raise ValueError("mu must be positive for the scale update")

    c = np.ones(X.shape[1])
    gamma = np.zeros(X.shape[1])
    beta = np.zeros(X.shape[1])
    for iteration in range(1, max_iters + 1):
        gamma = gamma_closed_form(X, c, y, lam)
        c = ridge_closed_form(X * gamma, y, mu)
        gamma = np.where(c < 0, -gamma, gamma)
        c = np.maximum(np.abs(c), C_FLOOR)

        updated = c * gamma
        change = float(np.max(np.abs(updated - beta)))
        beta = updated
        if change < tol:
            return AdaptiveRidgeFit(beta, c, gamma, iteration, True)

    _logger.warning("adaptive ridge stopped after %d iterations (last change %.2e)", max_iters, change)
    return AdaptiveRidgeFit(beta, c, gamma, max_iters, False)


def lasso_equivalent_penalty(beta: np.ndarray, c: np.ndarray, lam: float) -> float:
    """Lasso penalty t (for ‖y − Xβ‖² + t‖β‖₁) matched by a converged adaptive ridge."""
    return float(2.0 * lam * np.sum(np.abs(beta)) / np.sum(c * c))


# ---------------------------------------------------------------------------
# training loops


@contextlib.contextmanager
def _trace_file(path: Optional[Path]) -> Iterator[Optional[IO[str]]]:
    if path is None:
        yield None
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        yield handle


class _EarlyStopping:
    def __init__(self, patience: int) -> None:
        self.patience = patience
        self.best: Optional[_Snapshot] = None
        self.best_loss = np.inf
        self.stale = 0

    def update(self, loss: float, snapshot: _Snapshot) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best = snapshot
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


def _check_inputs(data: TrainingData, cfg: NetworkConfig, penalty: PenaltyState) -> None:
    d = as_matrix(data.X).shape[1]
    if cfg.input_dim != d or len(penalty.c) != d or len(penalty.gamma) != d:
        raise DimensionMismatch("data, network config and penalty state disagree on d")
    if len(data.y) != len(data.X):
        raise DimensionMismatch("X and y have different row counts")


def _initial_params(cfg: NetworkConfig, config: TrainConfig, params: Optional[NetworkParams]) -> NetworkParams:
    if params is not None:
        return params.copy()
    if config.freeze_network:
        return zero_params(cfg)
    return init_params(cfg, SeededRng(config.seed, STREAM_INIT))


def _support_size(beta: np.ndarray) -> int:
    return int(np.sum(np.abs(beta) >= ZERO_THRESHOLD))


def _record(
    iteration: int,
    train_loss: float,
    val_loss: Optional[float],
    beta: np.ndarray,
    config: TrainConfig,
    history: list[TraceRecord],
    trace: Optional[IO[str]],
) -> TraceRecord:
    record = TraceRecord(iteration, train_loss, val_loss, _support_size(beta))
    history.append(record)
    if trace is not None:
        trace.write(json.dumps(record.to_dict()) + "\n")
    if iteration % config.log_every == 0:
        _logger.debug(
            "iteration %d: train %.6g, val %s, support %d",
            iteration, train_loss, val_loss, record.support_size,
        )
    return record


class _StepRunner:
    """Moves the network weights and c through ``optimizer_step``."""

    def __init__(self, params: NetworkParams, config: TrainConfig) -> None:
        self.config = config
        self.size = params.size
        self.state = OptimizerState()

    def __call__(
        self,
        params: NetworkParams,
        c: np.ndarray,
        net_grads: NetworkGradients,
        grad_c: np.ndarray,
    ) -> tuple[NetworkParams, np.ndarray]:
        net_vector = np.zeros(self.size) if self.config.freeze_network else net_grads.flatten()
        c_vector = np.zeros_like(c) if self.config.freeze_scales else grad_c
        values = np.concatenate([params.flatten(), c])
        gradients = np.concatenate([net_vector, c_vector])
        lower = np.concatenate([np.full(self.size, -np.inf), np.full(len(c), C_FLOOR)])
        updated = optimizer_step(values, gradients, self.config, self.state, lower)
        return params.unflatten(updated[:self.size]), updated[self.size:]


def train_regression(
    data: TrainingData,
    cfg: NetworkConfig,
    config: TrainConfig,
    penalty: PenaltyState,
    params: Optional[NetworkParams] = None,
) -> FittedModel:
    """Adaptive-ridge NIMO for a continuous target.

    y is centered and its mean becomes the intercept. Each iteration solves
    for γ̂ in closed form on the (noisy) design, then takes one optimizer
    step on the network weights and c. With a validation block the
    best-validation snapshot is kept; β̂ is finally recomputed on the
    noise-free design at that snapshot. For δ = 1 with trainable scales
    that last solve runs the alternating ridge updates to convergence, so
    β̂ is the exact Lasso solution on the final design.
    """
    _check_inputs(data, cfg, penalty)
    X = as_matrix(data.X)
    y_mean = float(np.mean(data.y))
    y = np.asarray(data.y, dtype=np.float64) - y_mean

    train_net = cfg.with_mode(True)
    eval_net = cfg.with_mode(False)
    noise_rng = SeededRng(config.seed, STREAM_NOISE)
    params = _initial_params(cfg, config, params)
    c = penalty.c.astype(np.float64).copy()
    step = _StepRunner(params, config)
    stopper = _EarlyStopping(config.patience)
    if not data.has_validation:
        _logger.warning("no validation rows: early stopping disabled, keeping the last iterate")

    history: list[TraceRecord] = []
    gamma = penalty.gamma.copy()
    with _trace_file(config.trace_path) as trace:
        for iteration in range(config.max_iters):
            try:
                evaluation, net_grads = regression_objective(
                    params, train_net, X, y, replace(penalty, c=c), config.gradient_mode, noise_rng
                )
            except NonFinite as err:
                raise Diverged(iteration, f"training diverged at iteration {iteration}: {err}") from err
            if not np.isfinite(evaluation.loss):
                raise Diverged(iteration)
            gamma = evaluation.gamma

            val_loss = None
            if data.has_validation:
                G_val, _ = forward_matrix(params, eval_net, data.X_val)
                fitted = y_mean + apply_corrections(as_matrix(data.X_val), G_val) @ evaluation.beta
                val_loss = float(np.mean((data.y_val - fitted) ** 2))
            _record(iteration, evaluation.loss, val_loss, evaluation.beta, config, history, trace)

            if val_loss is not None and stopper.update(
                val_loss, _Snapshot(params.copy(), c.copy(), gamma, y_mean, iteration)
            ):
                _logger.info("early stop at iteration %d (best %d)", iteration, stopper.best.iteration)
                break
            params, c = step(params, c, net_grads, evaluation.grad_c)

    best = stopper.best or _Snapshot(params, c, gamma, y_mean, config.max_iters)
    G, _ = forward_matrix(best.params, eval_net, X)
    B = apply_corrections(X, G)
    scales = best.c
    if (
        penalty.delta == 1.0
        and penalty.mu > 0
        and not config.freeze_scales
        and config.gradient_mode is GradientMode.STOP_GRADIENT
    ):
        # with the network fixed the scale problem is a Lasso; solve it to the end
        polished = adaptive_ridge(B, y, penalty.lam, penalty.mu, max_iters=POLISH_ITERS)
        scales, beta = polished.c, polished.beta
    else:
        beta = scales * gamma_closed_form(B, scales, y, penalty.lam)
    _logger.info("regression fit: %d of %d coefficients nonzero", _support_size(beta), len(beta))
    return FittedModel(
        intercept=y_mean,
        coefficients=beta,
        params=best.params,
        cfg=eval_net,
        stats=data.stats,
        task=Task.REGRESSION,
        scales=scales,
        feature_names=data.feature_names,
        history=tuple(history),
    )


def _degenerate_model(data: TrainingData, cfg: NetworkConfig, y: np.ndarray) -> FittedModel:
    rate = float(np.clip(np.mean(y), PI_CLAMP, 1.0 - PI_CLAMP))
    _logger.warning("training labels are all %d: returning an intercept-only model", int(y[0]))
    d = cfg.input_dim
    return FittedModel(
        intercept=float(np.log(rate / (1.0 - rate))),
        coefficients=np.zeros(d),
        params=zero_params(cfg),
        cfg=cfg.with_mode(False),
        stats=data.stats,
        task=Task.LOGISTIC,
        scales=np.ones(d),
        feature_names=data.feature_names,
        degenerate=True,
    )


def _logistic_objective(
    y: np.ndarray,
    eta: np.ndarray,
    gamma: np.ndarray,
    c: np.ndarray,
    penalty: PenaltyState,
) -> float:
    return (
        logistic_nll(y, eta)
        + 0.5 * penalty.lam * float(gamma @ gamma)
        + scale_penalty(c, penalty.mu, penalty.delta)
    )


def refine_irls(
    B: np.ndarray,
    c: np.ndarray,
    y: np.ndarray,
    lam: float,
    intercept: float,
    gamma: np.ndarray,
    max_steps: int = REFRESH_IRLS_STEPS,
    tol: float = REFRESH_IRLS_TOL,
) -> tuple[float, np.ndarray]:
    """Run IRLS steps on a fixed design until the coefficients settle."""
    for _ in range(max_steps):
        state = irls_working_quantities(B, c * gamma, y, intercept)
        new_intercept, new_gamma = irls_gamma_update(B, c, state, lam, fit_intercept=True)
        change = max(abs(new_intercept - intercept), float(np.max(np.abs(new_gamma - gamma))))
        intercept, gamma = new_intercept, new_gamma
        if change < tol:
            break
    return intercept, gamma


def train_classification(
    data: TrainingData,
    cfg: NetworkConfig,
    config: TrainConfig,
    penalty: PenaltyState,
    params: Optional[NetworkParams] = None,
) -> FittedModel:
    """IRLS NIMO for binary labels.

    One weighted ridge step per iteration updates the unpenalized intercept
    and γ; the network and c then take a gradient step on
    NLL + (λ/2)‖γ‖² + μ̃Σc^{2δ} with (intercept, γ) held fixed.
    """
    _check_inputs(data, cfg, penalty)
    if config.gradient_mode is not GradientMode.STOP_GRADIENT:
        raise ValueError("logistic training supports stop-gradient mode only")
    X = as_matrix(data.X)
    y = np.asarray(data.y, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("logistic training needs labels in {0, 1}")
    if np.all(y == y[0]):
        return _degenerate_model(data, cfg, y)

    train_net = cfg.with_mode(True)
    eval_net = cfg.with_mode(False)
    noise_rng = SeededRng(config.seed, STREAM_NOISE)
    params = _initial_params(cfg, config, params)
    c = penalty.c.astype(np.float64).copy()
    gamma = penalty.gamma.astype(np.float64).copy()
    intercept = 0.0
    step = _StepRunner(params, config)
    stopper = _EarlyStopping(config.patience)
    if not data.has_validation:
        _logger.warning("no validation rows: early stopping disabled, keeping the last iterate")

    history: list[TraceRecord] = []
    with _trace_file(config.trace_path) as trace:
        for iteration in range(config.max_iters):
            try:
                G, cache = forward_matrix(params, train_net, X, noise_rng)
                B = apply_corrections(X, G)
                state = irls_working_quantities(B, c * gamma, y, intercept)
                intercept, gamma = irls_gamma_update(B, c, state, penalty.lam, fit_intercept=True)
            except NonFinite as err:
                raise Diverged(iteration, f"training diverged at iteration {iteration}: {err}") from err

            beta = c * gamma
            eta = intercept + B @ beta
            group_value, group_grads = group_penalty(params, penalty.lam_group)
            loss = _logistic_objective(y, eta, gamma, c, penalty) + group_value
            if not np.isfinite(loss):
                raise Diverged(iteration)

            d_C = np.outer(sigmoid(eta) - y, gamma)
            grad_c = np.sum(d_C * B, axis=0) + scale_penalty_grad(c, penalty.mu, penalty.delta)
            net_grads = backward(cache, d_C * c * X) + group_grads

            val_loss = None
            if data.has_validation:
                G_val, _ = forward_matrix(params, eval_net, data.X_val)
                eta_val = intercept + apply_corrections(as_matrix(data.X_val), G_val) @ beta
                val_loss = logistic_nll(np.asarray(data.y_val, dtype=np.float64), eta_val) / len(eta_val)
            _record(iteration, loss, val_loss, beta, config, history, trace)

            if val_loss is not None and stopper.update(
                val_loss, _Snapshot(params.copy(), c.copy(), gamma.copy(), intercept, iteration)
            ):
                _logger.info("early stop at iteration %d (best %d)", iteration, stopper.best.iteration)
                break
            params, c = step(params, c, net_grads, grad_c)

    best = stopper.best or _Snapshot(params, c, gamma, intercept, config.max_iters)
    G, _ = forward_matrix(best.params, eval_net, X)
    intercept, gamma = refine_irls(
        apply_corrections(X, G), best.c, y, penalty.lam, best.intercept, best.gamma
    )
    beta = best.c * gamma
    if np.max(np.abs(beta), initial=0.0) > 1e4:
        _logger.warning("logistic coefficients exceed 1e4: training labels look separable")
    _logger.info("logistic fit: %d of %d coefficients nonzero", _support_size(beta), len(beta))
    return FittedModel(
        intercept=intercept,
        coefficients=beta,
        params=best.params,
        cfg=eval_net,
        stats=data.stats,
        task=Task.LOGISTIC,
        scales=best.c,
        feature_names=data.feature_names,
        history=tuple(history),
    )


def train(
    data: TrainingData,
    cfg: NetworkConfig,
    config: TrainConfig,
    penalty: PenaltyState,
    params: Optional[NetworkParams] = None,
) -> FittedModel:
    if config.task is Task.LOGISTIC:
        return train_classification(data, cfg, config, penalty, params)
    return train_regression(data, cfg, config, penalty, params)
