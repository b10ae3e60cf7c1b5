"""NIMO predictions: f(x) = β0 + Σ_j x_j β_j (1 + g(x_-j))."""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from nimo.errors import DimensionMismatch
from nimo.mlp import NetworkConfig, NetworkParams, forward_matrix, load_network, save_network
from nimo.numerics import SeededRng, StandardizationStats, as_matrix, check_finite, sigmoid


ZERO_THRESHOLD = 1e-3
SCHEMA_VERSION = 1


class Task(Enum):
    REGRESSION = "regression"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    train_loss: float
    val_loss: Optional[float]
    support_size: int

    def to_dict(self) -> dict[str, object]:
        return {
            "iteration": self.iteration,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "support_size": self.support_size,
        }


@dataclass(frozen=True)
class FittedModel:
    intercept: float
    coefficients: np.ndarray
    params: NetworkParams
    cfg: NetworkConfig
    stats: StandardizationStats
    task: Task
    scales: Optional[np.ndarray] = None
    feature_names: tuple[str, ...] = ()
    history: tuple[TraceRecord, ...] = field(default=(), repr=False)
    degenerate: bool = False

    def __post_init__(self) -> None:
        check_finite(np.asarray(self.coefficients), "coefficients")
        d = len(self.coefficients)
        if self.cfg.input_dim != d or self.stats.means.shape[0] != d:
            raise DimensionMismatch("coefficients, network and stats disagree on d")
        if self.feature_names and len(self.feature_names) != d:
            raise DimensionMismatch("feature_names length differs from d")

    @property
    def n_features(self) -> int:
        return len(self.coefficients)

    def names(self) -> list[str]:
        if self.feature_names:
            return list(self.feature_names)
        return [f"x{j + 1}" for j in range(self.n_features)]

    def support(self, threshold: float = ZERO_THRESHOLD) -> list[int]:
        return [int(j) for j in np.flatnonzero(np.abs(self.coefficients) >= threshold)]

    def raw_coefficients(self) -> np.ndarray:
        """Coefficients per unit of the unstandardized features."""
        return np.asarray(self.coefficients) / self.stats.stddevs

    def to_dict(self) -> dict[str, object]:
        return {
            "schema_version": SCHEMA_VERSION,
            "task": self.task.value,
            "intercept": self.intercept,
            "coefficients": np.asarray(self.coefficients).tolist(),
            "scales": None if self.scales is None else np.asarray(self.scales).tolist(),
            "feature_names": list(self.feature_names),
            "network": save_network(self.params, self.cfg),
            "stats": self.stats.to_dict(),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "FittedModel":
        params, cfg = load_network(payload["network"])
        scales = payload.get("scales")
        return cls(
            intercept=float(payload["intercept"]),
            coefficients=np.asarray(payload["coefficients"], dtype=np.float64),
            params=params,
            cfg=cfg.with_mode(False),
            stats=StandardizationStats.from_dict(payload["stats"]),
            task=Task(payload["task"]),
            scales=None if scales is None else np.asarray(scales, dtype=np.float64),
            feature_names=tuple(payload.get("feature_names", ())),
            degenerate=bool(payload.get("degenerate", False)),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "FittedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class EffectiveCoefficients:
    """Per-sample coefficients β_j (1 + g(x_i,-j))."""

    values: np.ndarray

    def reconstruct(self, X_std: np.ndarray, intercept: float) -> np.ndarray:
        return intercept + np.sum(self.values * as_matrix(X_std), axis=1)


def apply_corrections(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    return X * (1.0 + G)


def design_matrix(
    params: NetworkParams,
    cfg: NetworkConfig,
    X: np.ndarray,
    rng: Optional[SeededRng] = None,
) -> np.ndarray:
    """B = X + X ∘ G for standardized ``X``."""
    X = as_matrix(X)
    G, _ = forward_matrix(params, cfg, X, rng)
    return apply_corrections(X, G)


def _standardized(model: FittedModel, X_raw: np.ndarray) -> np.ndarray:
    X_raw = as_matrix(X_raw)
    if X_raw.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"model has {model.n_features} features, input has {X_raw.shape[1]}"
        )
    return model.stats.apply(X_raw)


def decision_function(model: FittedModel, X_raw: np.ndarray) -> np.ndarray:
    """Linear predictor β0 + B β in eval mode."""
    X_std = _standardized(model, X_raw)
    B = design_matrix(model.params, model.cfg.with_mode(False), X_std)
    return model.intercept + B @ model.coefficients


def predict(model: FittedModel, X_raw: np.ndarray) -> np.ndarray:
    eta = decision_function(model, X_raw)
    if model.task is Task.LOGISTIC:
        return sigmoid(eta)
    return eta


def predict_labels(model: FittedModel, X_raw: np.ndarray) -> np.ndarray:
    return (predict(model, X_raw) >= 0.5).astype(np.float64)


def effective_coefficients(model: FittedModel, X_raw: np.ndarray) -> EffectiveCoefficients:
    X_std = _standardized(model, X_raw)
    G, _ = forward_matrix(model.params, model.cfg.with_mode(False), X_std)
    return EffectiveCoefficients(values=model.coefficients[None, :] * (1.0 + G))
