"""Shared correction network g_u.

One three-layer network serves every feature position. For query (i, j) the
input is row i with entry j zeroed, followed by the binary code of j. The
layers are: fc -> (+noise in training) -> tanh -> fc -> sin -> fc -> range
squash. The squashed output at the zero input is subtracted so g(0) = 0.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, NamedTuple, Optional

import numpy as np

from nimo.errors import DimensionMismatch, IndexOutOfRange, StaleCache
from nimo.numerics import SeededRng, as_matrix, check_finite


PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


class OutputRange(Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class Activation(NamedTuple):
    fn: Callable[[np.ndarray], np.ndarray]
    # derivative expressed through (pre-activation, activation)
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray]


TANH = Activation(np.tanh, lambda a, h: 1.0 - h * h)
SIN = Activation(np.sin, lambda a, h: np.cos(a))
IDENTITY = Activation(lambda a: a, lambda a, h: np.ones_like(a))

HIDDEN1 = TANH
HIDDEN2 = SIN
SQUASHES = {
    OutputRange.REGRESSION: TANH,
    # range [-1, 3]
    OutputRange.CLASSIFICATION: Activation(
        lambda a: 1.0 + 2.0 * np.tanh(a),
        lambda a, h: 2.0 * (1.0 - np.tanh(a) ** 2),
    ),
}


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden1: int = 32
    hidden2: int = 32
    noise_scale: float = 0.2
    output_range: OutputRange = OutputRange.REGRESSION
    train_mode: bool = False

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if self.hidden1 < 1 or self.hidden2 < 1:
            raise ValueError("hidden layer sizes must be at least 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")

    @property
    def enc_bits(self) -> int:
        # floor(log2 d) + 1
        return self.input_dim.bit_length()

    @property
    def in_features(self) -> int:
        return self.input_dim + self.enc_bits

    def with_mode(self, train: bool) -> "NetworkConfig":
        return replace(self, train_mode=train)

    def to_dict(self) -> dict[str, object]:
        return {
            "input_dim": self.input_dim,
            "hidden1": self.hidden1,
            "hidden2": self.hidden2,
            "noise_scale": self.noise_scale,
            "output_range": self.output_range.value,
            "train_mode": self.train_mode,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "NetworkConfig":
        return cls(
            input_dim=int(payload["input_dim"]),
            hidden1=int(payload.get("hidden1", 32)),
            hidden2=int(payload.get("hidden2", 32)),
            noise_scale=float(payload.get("noise_scale", 0.2)),
            output_range=OutputRange(payload.get("output_range", "regression")),
            train_mode=bool(payload.get("train_mode", False)),
        )


@dataclass
class NetworkParams:
    input_dim: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.input_dim, *(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.input_dim, *(np.zeros_like(a) for a in self.arrays()))

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, vector: np.ndarray) -> "NetworkParams":
        """Parameters with this object's shapes, filled from ``vector``."""
        pieces = []
        offset = 0
        for array in self.arrays():
            pieces.append(np.asarray(vector[offset:offset + array.size]).reshape(array.shape).copy())
            offset += array.size
        if offset != len(vector):
            raise DimensionMismatch(f"expected {offset} values, got {len(vector)}")
        return NetworkParams(self.input_dim, *pieces)

    def __add__(self, other: "NetworkParams") -> "NetworkParams":
        return NetworkParams(
            self.input_dim, *(a + b for a, b in zip(self.arrays(), other.arrays()))
        )

    def to_dict(self) -> dict[str, object]:
        payload: dict[str, object] = {"input_dim": self.input_dim}
        payload.update({name: getattr(self, name).tolist() for name in PARAM_NAMES})
        return payload

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "NetworkParams":
        arrays = [np.asarray(payload[name], dtype=np.float64) for name in PARAM_NAMES]
        params = cls(int(payload["input_dim"]), *arrays)
        check_finite(params.flatten(), "network parameters")
        return params


# Gradients share the parameter layout.
NetworkGradients = NetworkParams


def init_params(cfg: NetworkConfig, rng: SeededRng) -> NetworkParams:
    """Uniform weights in ±1/sqrt(fan_in), zero biases."""
    sizes = [(cfg.hidden1, cfg.in_features), (cfg.hidden2, cfg.hidden1), (1, cfg.hidden2)]
    arrays = []
    for fan_out, fan_in in sizes:
        bound = 1.0 / np.sqrt(fan_in)
        arrays.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        arrays.append(np.zeros(fan_out))
    return NetworkParams(cfg.input_dim, *arrays)


def zero_params(cfg: NetworkConfig) -> NetworkParams:
    sizes = [(cfg.hidden1, cfg.in_features), (cfg.hidden2, cfg.hidden1), (1, cfg.hidden2)]
    arrays = []
    for fan_out, fan_in in sizes:
        arrays.extend([np.zeros((fan_out, fan_in)), np.zeros(fan_out)])
    return NetworkParams(cfg.input_dim, *arrays)


def encode_position(j: int, d: int) -> np.ndarray:
    """Big-endian binary code of ``j`` on floor(log2 d) + 1 bits."""
    if not 0 <= j < d:
        raise IndexOutOfRange(f"feature index {j} outside 0..{d - 1}")
    bits = d.bit_length()
    return np.array([(j >> shift) & 1 for shift in range(bits - 1, -1, -1)], dtype=np.float64)


def position_table(d: int) -> np.ndarray:
    return np.vstack([encode_position(j, d) for j in range(d)])


@dataclass
class _Trace:
    inputs: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    a3: np.ndarray
    out: np.ndarray


@dataclass
class ForwardCache:
    params: NetworkParams
    output_range: OutputRange
    data: _Trace
    baseline: _Trace
    zero_rows: np.ndarray
    shape: tuple[int, int]


def _pipeline(
    params: NetworkParams,
    inputs: np.ndarray,
    noise: Optional[np.ndarray],
    output_range: OutputRange,
) -> _Trace:
    pre1 = inputs @ params.W1.T + params.b1
    if noise is not None:
        pre1 = pre1 + noise
    h1 = HIDDEN1.fn(pre1)
    a2 = h1 @ params.W2.T + params.b2
    h2 = HIDDEN2.fn(a2)
    a3 = (h2 @ params.W3.T + params.b3)[..., 0]
    out = SQUASHES[output_range].fn(a3)
    return _Trace(inputs, pre1, h1, a2, h2, a3, out)


def _pipeline_backward(
    params: NetworkParams,
    trace: _Trace,
    d_out: np.ndarray,
    output_range: OutputRange,
) -> NetworkGradients:
    def flat(array: np.ndarray) -> np.ndarray:
        return array.reshape(-1, array.shape[-1])

    da3 = d_out * SQUASHES[output_range].grad(trace.a3, trace.out)
    dW3 = da3.reshape(1, -1) @ flat(trace.h2)
    db3 = np.array([da3.sum()])

    dh2 = da3[..., None] * params.W3[0]
    da2 = dh2 * HIDDEN2.grad(trace.a2, trace.h2)
    dW2 = flat(da2).T @ flat(trace.h1)
    db2 = flat(da2).sum(axis=0)

    dh1 = da2 @ params.W2
    da1 = dh1 * HIDDEN1.grad(trace.pre1, trace.h1)
    dW1 = flat(da1).T @ flat(trace.inputs)
    db1 = flat(da1).sum(axis=0)

    return NetworkParams(params.input_dim, dW1, db1, dW2, db2, dW3, db3)


def _masked_inputs(X: np.ndarray, d: int) -> np.ndarray:
    n = X.shape[0]
    masked = np.repeat(X[:, None, :], d, axis=1)
    diagonal = np.arange(d)
    masked[:, diagonal, diagonal] = 0.0
    codes = np.broadcast_to(position_table(d), (n, d, d.bit_length()))
    return np.concatenate([masked, codes], axis=2)


def _baseline_inputs(d: int) -> np.ndarray:
    return np.concatenate([np.zeros((d, d)), position_table(d)], axis=1)


def _layer1_noise(cfg: NetworkConfig, rng: Optional[SeededRng], shape: tuple[int, ...]) -> Optional[np.ndarray]:
    if not cfg.train_mode or cfg.noise_scale == 0:
        return None
    if rng is None:
        raise ValueError("train mode with noise injection needs a random stream")
    return cfg.noise_scale * rng.normal((*shape, cfg.hidden1))


def forward_matrix(
    params: NetworkParams,
    cfg: NetworkConfig,
    X: np.ndarray,
    rng: Optional[SeededRng] = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate G[i, j] = g(x_i with x_ij masked, j) for every query.

    Noise enters only the data term. The baseline term is always noise free,
    and queries whose masked input is all zeros return exactly 0.
    """
    X = as_matrix(X)
    n, d = X.shape
    if d != cfg.input_dim or params.W1.shape != (cfg.hidden1, cfg.in_features):
        raise DimensionMismatch(
            f"network expects {cfg.input_dim} features, got {d}"
        )

    inputs = _masked_inputs(X, d)
    data = _pipeline(params, inputs, _layer1_noise(cfg, rng, (n, d)), cfg.output_range)
    baseline = _pipeline(params, _baseline_inputs(d), None, cfg.output_range)

    zero_rows = ~np.any(inputs[:, :, :d] != 0.0, axis=2)
    G = data.out - baseline.out[None, :]
    G[zero_rows] = 0.0
    check_finite(G, "network output", "overflow in forward pass")

    cache = ForwardCache(params, cfg.output_range, data, baseline, zero_rows, (n, d))
    return G, cache


def forward_one(
    params: NetworkParams,
    cfg: NetworkConfig,
    x: np.ndarray,
    j: int,
    rng: Optional[SeededRng] = None,
) -> tuple[float, ForwardCache]:
    x = np.asarray(x, dtype=np.float64).ravel()
    d = cfg.input_dim
    if x.shape[0] != d:
        raise DimensionMismatch(f"expected {d} features, got {x.shape[0]}")
    code = encode_position(j, d)

    masked = x.copy()
    masked[j] = 0.0
    inputs = np.concatenate([masked, code])[None, None, :]
    data = _pipeline(params, inputs, _layer1_noise(cfg, rng, (1, 1)), cfg.output_range)
    baseline_inputs = np.concatenate([np.zeros(d), code])[None, :]
    baseline = _pipeline(params, baseline_inputs, None, cfg.output_range)

    zero_rows = np.array([[not np.any(masked != 0.0)]])
    value = 0.0 if zero_rows[0, 0] else float(data.out[0, 0] - baseline.out[0])
    check_finite(np.array([value]), "network output", "overflow in forward pass")

    cache = ForwardCache(params, cfg.output_range, data, baseline, zero_rows, (1, 1))
    return value, cache


def backward(cache: ForwardCache, upstream: np.ndarray) -> NetworkGradients:
    """Exact gradients of a loss whose derivative wrt G is ``upstream``."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.shape:
        raise StaleCache(
            f"upstream gradient shape {upstream.shape} does not match cache {cache.shape}"
        )

    d_out = np.where(cache.zero_rows, 0.0, upstream)
    grads = _pipeline_backward(cache.params, cache.data, d_out, cache.output_range)

    # G = s(data) - s(baseline_j): baseline row j collects -sum_i dG[i, j]
    d_base = -d_out.sum(axis=0)
    return grads + _pipeline_backward(cache.params, cache.baseline, d_base, cache.output_range)


def group_penalty(params: NetworkParams, lam_group: float) -> tuple[float, NetworkGradients]:
    """lam_group times the sum of first-layer column norms over data features.

    Positional-encoding columns are not penalized. A zero column contributes
    a zero subgradient.
    """
    if lam_group < 0:
        raise ValueError("group penalty must be non-negative")
    grads = params.zeros_like()
    columns = params.W1[:, :params.input_dim]
    norms = np.linalg.norm(columns, axis=0)
    value = float(lam_group * norms.sum())

    active = norms > 0
    grads.W1[:, :params.input_dim][:, active] = lam_group * columns[:, active] / norms[active]
    return value, grads


def first_layer_norms(params: NetworkParams) -> np.ndarray:
    return np.linalg.norm(params.W1[:, :params.input_dim], axis=0)


def save_network(params: NetworkParams, cfg: NetworkConfig) -> dict[str, object]:
    return {"config": cfg.to_dict(), "layers": params.to_dict()}


def load_network(payload: dict[str, object]) -> tuple[NetworkParams, NetworkConfig]:
    cfg = NetworkConfig.from_dict(payload["config"])
    params = NetworkParams.from_dict(payload["layers"])
    if params.W1.shape != (cfg.hidden1, cfg.in_features):
        raise DimensionMismatch("stored layers do not match the stored config")
    return params, cfg
