"""Dense linear algebra, standardization and seeded random streams."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

from nimo.errors import ConstantColumn, DimensionMismatch, NonFinite, NotSpd


_logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_GROWTH = 10.0
JITTER_RETRIES = 5

# Stream ids derived from one experiment seed.
STREAM_DATA = 0
STREAM_SPLIT = 1
STREAM_INIT = 2
STREAM_NOISE = 3
STREAM_DROPOUT = 4
STREAM_CELLS = 5


@dataclass(frozen=True)
class StandardizationStats:
    means: np.ndarray
    stddevs: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.means.shape[0]:
            raise DimensionMismatch(
                f"expected {self.means.shape[0]} columns, got {X.shape[1]}"
            )
        return (X - self.means) / self.stddevs

    def invert(self, X_std: np.ndarray) -> np.ndarray:
        return as_matrix(X_std) * self.stddevs + self.means

    def to_dict(self) -> dict[str, list[float]]:
        return {"means": self.means.tolist(), "stddevs": self.stddevs.tolist()}

    @classmethod
    def from_dict(cls, payload: dict[str, list[float]]) -> "StandardizationStats":
        return cls(
            means=np.asarray(payload["means"], dtype=np.float64),
            stddevs=np.asarray(payload["stddevs"], dtype=np.float64),
        )


class SeededRng:
    """Reproducible random stream identified by ``(seed, stream)``.

    Streams are children of one ``SeedSequence`` so data generation, splits,
    initialization and noise injection never share draws.
    """

    def __init__(self, seed: int, stream: int = 0, _path: tuple[int, ...] = ()) -> None:
        self.seed = int(seed)
        self.stream = int(stream)
        self._key = (self.stream, *_path)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def derive(self, child: int) -> "SeededRng":
        """Independent child stream, e.g. one per repetition or grid cell."""
        return SeededRng(self.seed, self.stream, (*self._key[1:], int(child)))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def normal(self, size: object = None) -> np.ndarray:
        return self._generator.standard_normal(size)

    def uniform(self, low: float, high: float, size: object = None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def bernoulli(self, p: np.ndarray) -> np.ndarray:
        return (self._generator.random(np.shape(p)) < p).astype(np.float64)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, key={self._key})"


def as_matrix(X: object) -> np.ndarray:
    matrix = np.asarray(X, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {matrix.shape}")
    return matrix


def standardize(X: np.ndarray) -> tuple[np.ndarray, StandardizationStats]:
    """Return column-standardized ``X`` using the population (1/n) stddev."""
    X = as_matrix(X)
    if not np.all(np.isfinite(X)):
        raise NonFinite("input matrix contains non-finite entries")
    if X.shape[0] < 2:
        raise DimensionMismatch("standardization needs at least two rows")

    means = X.mean(axis=0)
    stddevs = X.std(axis=0)
    for column, (mean, std) in enumerate(zip(means, stddevs)):
        if std <= 1e-12 * abs(mean):
            raise ConstantColumn(column)

    stats = StandardizationStats(means=means, stddevs=stddevs)
    return stats.apply(X), stats


def solve_spd(A: np.ndarray, b: np.ndarray, jitter: bool = True) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky.

    When the factorization fails, a diagonal jitter starting at 1e-10 is
    added and grown tenfold per retry (five retries, up to 1e-6).
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    if A.shape[0] != A.shape[1] or b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"cannot solve system {A.shape} with rhs {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NonFinite("linear system contains non-finite entries")

    try:
        return linalg.cho_solve(linalg.cho_factor(A, lower=True), b)
    except linalg.LinAlgError:
        if not jitter:
            raise NotSpd("matrix is not positive definite") from None

    identity = np.eye(A.shape[0])
    amount = JITTER_START
    for attempt in range(JITTER_RETRIES):
        try:
            factor = linalg.cho_factor(A + amount * identity, lower=True)
        except linalg.LinAlgError:
            amount *= JITTER_GROWTH
            continue
        _logger.warning(
            "Cholesky needed jitter %.1e after %d retries", amount, attempt + 1
        )
        return linalg.cho_solve(factor, b)

    raise NotSpd(f"matrix is not positive definite after jitter up to {amount / JITTER_GROWTH:.0e}")


def ridge_closed_form(B: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Minimizer of ``‖y − Bβ‖² + λ‖β‖²``, i.e. ``(BᵀB + λI)⁻¹Bᵀy``."""
    B = as_matrix(B)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ValueError(f"ridge penalty must be non-negative, got {lam}")
    if y.shape[0] != B.shape[0]:
        raise DimensionMismatch(f"design has {B.shape[0]} rows but target has {y.shape[0]}")
    if lam == 0 and np.linalg.matrix_rank(B) < B.shape[1]:
        raise NotSpd("unpenalized design is rank deficient")

    gram = B.T @ B
    gram[np.diag_indices_from(gram)] += lam
    return solve_spd(gram, B.T @ y, jitter=lam > 0)


def sigmoid(eta: np.ndarray) -> np.ndarray:
    return expit(eta)


def relative_residual(A: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(A @ x - b)) / (1.0 + np.max(np.abs(b))))


def check_finite(values: np.ndarray, what: str, extra: Optional[str] = None) -> None:
    if not np.all(np.isfinite(values)):
        suffix = f" ({extra})" if extra else ""
        raise NonFinite(f"{what} contains non-finite entries{suffix}")


def logistic_nll(y: np.ndarray, eta: np.ndarray) -> float:
    """Summed negative Bernoulli log-likelihood of labels ``y`` at logits ``eta``."""
    return float(-np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))
