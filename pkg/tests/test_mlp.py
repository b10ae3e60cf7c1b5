import numpy as np
import pytest

from nimo.errors import DimensionMismatch, IndexOutOfRange, StaleCache
from nimo.mlp import (
    IDENTITY,
    NetworkConfig,
    NetworkParams,
    OutputRange,
    backward,
    encode_position,
    first_layer_norms,
    forward_matrix,
    forward_one,
    group_penalty,
    init_params,
    load_network,
    save_network,
    zero_params,
)
from nimo.numerics import STREAM_INIT, STREAM_NOISE, SeededRng


def _random_params(cfg: NetworkConfig, rng: np.random.Generator, scale: float = 0.8) -> NetworkParams:
    params = zero_params(cfg)
    return params.unflatten(scale * rng.normal(size=params.size))


def test_encode_position_examples() -> None:
    assert encode_position(0, 10).tolist() == [0, 0, 0, 0]
    assert encode_position(3, 10).tolist() == [0, 0, 1, 1]
    assert encode_position(2, 3).tolist() == [1, 0]


def test_encode_position_is_injective() -> None:
    for d in (1, 2, 3, 7, 8, 100, 1024):
        codes = {tuple(encode_position(j, d)) for j in range(d)}
        assert len(codes) == d
        assert len(next(iter(codes))) == int(np.floor(np.log2(d))) + 1


def test_encode_position_out_of_range() -> None:
    with pytest.raises(IndexOutOfRange):
        encode_position(10, 10)
    with pytest.raises(IndexOutOfRange):
        encode_position(-1, 10)


def test_network_config_validation() -> None:
    assert NetworkConfig(10).enc_bits == 4
    assert NetworkConfig(10).in_features == 14
    with pytest.raises(ValueError):
        NetworkConfig(0)
    with pytest.raises(ValueError):
        NetworkConfig(3, hidden1=0)
    with pytest.raises(ValueError):
        NetworkConfig(3, noise_scale=-0.1)


def test_zero_input_gives_exact_zero(rng: np.random.Generator) -> None:
    for output_range in OutputRange:
        cfg = NetworkConfig(5, hidden1=6, hidden2=4, output_range=output_range, train_mode=True)
        params = _random_params(cfg, rng, scale=2.0)
        for j in range(5):
            value, _ = forward_one(params, cfg, np.zeros(5), j, SeededRng(1, STREAM_NOISE))
            assert value == 0.0
        G, _ = forward_matrix(params, cfg, np.zeros((4, 5)), SeededRng(1, STREAM_NOISE))
        assert np.array_equal(G, np.zeros((4, 5)))


def test_zero_params_give_zero_corrections(rng: np.random.Generator) -> None:
    for output_range in OutputRange:
        cfg = NetworkConfig(3, output_range=output_range)
        G, _ = forward_matrix(zero_params(cfg), cfg, rng.normal(size=(6, 3)))
        assert np.array_equal(G, np.zeros((6, 3)))


def test_hand_trace_single_unit() -> None:
    cfg = NetworkConfig(2, hidden1=1, hidden2=1)
    # inputs: (x1, x2, bit1, bit0); j = 0 has code (0, 0)
    params = NetworkParams(
        2,
        W1=np.array([[0.7, -1.3, 0.4, 0.9]]),
        b1=np.array([0.2]),
        W2=np.array([[1.5]]),
        b2=np.array([-0.3]),
        W3=np.array([[0.8]]),
        b3=np.array([0.1]),
    )

    def raw(x2: float) -> float:
        h1 = np.tanh(-1.3 * x2 + 0.2)
        h2 = np.sin(1.5 * h1 - 0.3)
        return float(np.tanh(0.8 * h2 + 0.1))

    expected = raw(0.3) - raw(0.0)
    value, _ = forward_one(params, cfg, np.array([5.0, 0.3]), 0)
    assert value == pytest.approx(expected, abs=1e-15)

    ignored, _ = forward_one(params, cfg, np.array([-40.0, 0.3]), 0)
    assert ignored == value


def test_forward_matrix_matches_forward_one(rng: np.random.Generator) -> None:
    cfg = NetworkConfig(2, hidden1=5, hidden2=3)
    params = _random_params(cfg, rng)
    X = rng.normal(size=(3, 2))
    G, _ = forward_matrix(params, cfg, X)
    for i in range(3):
        for j in range(2):
            value, _ = forward_one(params, cfg, X[i], j)
            assert G[i, j] == pytest.approx(value, abs=1e-14)


def test_forward_matrix_single_row(rng: np.random.Generator) -> None:
    cfg = NetworkConfig(4, hidden1=3, hidden2=3, output_range=OutputRange.CLASSIFICATION)
    params = _random_params(cfg, rng)
    x = rng.normal(size=4)
    G, _ = forward_matrix(params, cfg, x[None, :])
    assert G.shape == (1, 4)
    assert np.allclose(G[0], [forward_one(params, cfg, x, j)[0] for j in range(4)], atol=1e-14)


def test_forward_matrix_dimension_mismatch(tiny_cfg: NetworkConfig) -> None:
    params = init_params(tiny_cfg, SeededRng(0, STREAM_INIT))
    with pytest.raises(DimensionMismatch):
        forward_matrix(params, tiny_cfg, np.zeros((2, 4)))


def test_masking_independence(rng: np.random.Generator) -> None:
    cfg = NetworkConfig(4, hidden1=8, hidden2=8)
    params = _random_params(cfg, rng)
    x = rng.normal(size=4)
    for j in range(4):
        X = np.tile(x, (10_000, 1))
        X[:, j] = rng.normal(scale=10.0, size=10_000)
        G, _ = forward_matrix(params, cfg, X)
        assert np.ptp(G[:, j]) <= 1e-12


def test_regression_output_range(rng: np.random.Generator) -> None:
    cfg = NetworkConfig(3, hidden1=6, hidden2=6)
    params = _random_params(cfg, rng, scale=5.0)
    G, _ = forward_matrix(params, cfg, rng.normal(scale=3.0, size=(200, 3)))
    assert np.max(np.abs(G)) <= 2.0


def test_noise_is_deterministic_given_stream(rng: np.random.Generator) -> None:
    cfg = NetworkConfig(3, hidden1=4, hidden2=4, train_mode=True)
    params = _random_params(cfg, rng)
    X = rng.normal(size=(5, 3))
    first, _ = forward_matrix(params, cfg, X, SeededRng(9, STREAM_NOISE))
    second, _ = forward_matrix(params, cfg, X, SeededRng(9, STREAM_NOISE))
    clean, _ = forward_matrix(params, cfg.with_mode(False), X)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, clean)


def test_train_mode_needs_a_stream(tiny_cfg: NetworkConfig) -> None:
    params = init_params(tiny_cfg, SeededRng(0, STREAM_INIT))
    with pytest.raises(ValueError):
        forward_matrix(params, tiny_cfg.with_mode(True), np.ones((2, 3)))


def test_backward_zero_upstream(rng: np.random.Generator, tiny_cfg: NetworkConfig) -> None:
    params = _random_params(tiny_cfg, rng)
    _, cache = forward_matrix(params, tiny_cfg, rng.normal(size=(4, 3)))
    grads = backward(cache, np.zeros((4, 3)))
    assert np.array_equal(grads.flatten(), np.zeros(params.size))


def test_backward_rejects_stale_shape(rng: np.random.Generator, tiny_cfg: NetworkConfig) -> None:
    params = _random_params(tiny_cfg, rng)
    _, cache = forward_matrix(params, tiny_cfg, rng.normal(size=(4, 3)))
    with pytest.raises(StaleCache):
        backward(cache, np.zeros((5, 3)))


def test_backward_matches_finite_differences(rng: np.random.Generator) -> None:
    h = 1e-5
    for _ in range(100):
        d = int(rng.integers(1, 7))
        cfg = NetworkConfig(
            d,
            hidden1=int(rng.integers(1, 9)),
            hidden2=int(rng.integers(1, 9)),
            output_range=OutputRange.CLASSIFICATION if rng.random() < 0.5 else OutputRange.REGRESSION,
        )
        params = _random_params(cfg, rng)
        X = rng.normal(size=(3, d))
        upstream = rng.normal(size=(3, d))

        def loss(vector: np.ndarray) -> float:
            G, _ = forward_matrix(params.unflatten(vector), cfg, X)
            return float(np.sum(upstream * G))

        _, cache = forward_matrix(params, cfg, X)
        analytic = backward(cache, upstream).flatten()
        theta = params.flatten()
        for k in range(theta.size):
            step = np.zeros_like(theta)
            step[k] = h
            numeric = (loss(theta + step) - loss(theta - step)) / (2 * h)
            assert abs(analytic[k] - numeric) <= 1e-4 * max(abs(numeric), 1e-4)


def test_backward_linear_harness(monkeypatch: pytest.MonkeyPatch, rng: np.random.Generator) -> None:
    monkeypatch.setattr("nimo.mlp.HIDDEN1", IDENTITY)
    monkeypatch.setattr("nimo.mlp.HIDDEN2", IDENTITY)
    monkeypatch.setattr("nimo.mlp.SQUASHES", {OutputRange.REGRESSION: IDENTITY})

    d = 3
    cfg = NetworkConfig(d, hidden1=4, hidden2=2)
    params = _random_params(cfg, rng)
    X = rng.normal(size=(5, d))
    upstream = rng.normal(size=(5, d))

    # with identity layers G[i, j] = W3 W2 W1 (masked x_i); codes and biases cancel
    G, cache = forward_matrix(params, cfg, X)
    W1x = params.W1[:, :d]
    w = (params.W3 @ params.W2 @ W1x)[0]
    masked = np.repeat(X[:, None, :], d, axis=1)
    masked[:, np.arange(d), np.arange(d)] = 0.0
    assert np.allclose(G, masked @ w, atol=1e-12)

    S = np.einsum("ij,ijk->k", upstream, masked)
    grads = backward(cache, upstream)
    expected_W1 = np.zeros_like(params.W1)
    expected_W1[:, :d] = np.outer(params.W2.T @ params.W3[0], S)
    assert np.allclose(grads.W1, expected_W1, atol=1e-12)
    assert np.allclose(grads.W2, np.outer(params.W3[0], W1x @ S), atol=1e-12)
    assert np.allclose(grads.W3[0], params.W2 @ W1x @ S, atol=1e-12)
    for bias in (grads.b1, grads.b2, grads.b3):
        assert np.allclose(bias, 0.0, atol=1e-12)


def test_group_penalty_examples() -> None:
    cfg = NetworkConfig(1, hidden1=2, hidden2=1)
    params = zero_params(cfg)
    value, grads = group_penalty(params, 2.0)
    assert value == 0.0
    assert np.array_equal(grads.W1, np.zeros_like(params.W1))

    params.W1[:, 0] = [3.0, 4.0]
    params.W1[:, 1] = [7.0, 7.0]
    value, grads = group_penalty(params, 2.0)
    assert value == pytest.approx(10.0)
    assert np.allclose(grads.W1[:, 0], [1.2, 1.6])
    assert np.array_equal(grads.W1[:, 1], [0.0, 0.0])


def test_group_penalty_matches_column_norms(rng: np.random.Generator) -> None:
    cfg = NetworkConfig(3, hidden1=4, hidden2=2)
    params = _random_params(cfg, rng)
    params.W1[:, 1] = 0.0
    value, grads = group_penalty(params, 0.5)
    expected = 0.5 * sum(np.sqrt(np.sum(params.W1[:, j] ** 2)) for j in range(3))
    assert value == pytest.approx(expected, rel=1e-14)
    assert np.array_equal(grads.W1[:, 1], np.zeros(4))
    assert np.allclose(first_layer_norms(params), np.linalg.norm(params.W1[:, :3], axis=0))


def test_group_penalty_rejects_negative(tiny_cfg: NetworkConfig) -> None:
    with pytest.raises(ValueError):
        group_penalty(zero_params(tiny_cfg), -1.0)


def test_params_flatten_and_add(rng: np.random.Generator, tiny_cfg: NetworkConfig) -> None:
    params = _random_params(tiny_cfg, rng)
    restored = params.unflatten(params.flatten())
    assert np.array_equal(restored.flatten(), params.flatten())
    assert np.allclose((params + params).flatten(), 2 * params.flatten())
    with pytest.raises(DimensionMismatch):
        params.unflatten(np.zeros(params.size + 1))


def test_save_and_load_network(rng: np.random.Generator, tiny_cfg: NetworkConfig) -> None:
    params = _random_params(tiny_cfg, rng)
    loaded, cfg = load_network(save_network(params, tiny_cfg))
    assert cfg == tiny_cfg
    assert np.array_equal(loaded.flatten(), params.flatten())

    payload = save_network(params, tiny_cfg)
    payload["config"]["hidden1"] = 7
    with pytest.raises(DimensionMismatch):
        load_network(payload)
