import numpy as np
import pytest
from hypothesis import given, strategies as st

import fixtures
import oracles
from windbench.base import load_model
from windbench.errors import DivergedLoss, SequenceTooShort, ShapeMismatch
from windbench.linear import fit_ols
from windbench.neural import (LSTM, Conv1d, Dense, LayerStack, LSTMCell, MaxPool1d, NeuralRegressor,
                              TrainConfig, build_cnn1d, build_lstm, build_mlp, gradient_check,
                              load_stack, lstm_step, save_stack, train)
from windbench.neural.lstm import GATES


def cell_from_fixture(hidden=3, d=2, **kw):
    W, U, b, x, h, c = fixtures.lstm_cell_params(hidden, d, **kw)
    cell = LSTMCell(d, hidden, init="zeros")
    cell.params["W"][...] = W
    cell.params["U"][...] = U
    cell.params["b"][...] = b
    return cell, x, h, c


def gate_dicts(cell):
    h = cell.hidden
    return [{g: p[k * h:(k + 1) * h].tolist() for k, g in enumerate(GATES)}
            for p in (cell.params["W"], cell.params["U"], cell.params["b"])]


# dense

def test_dense_zero_map():
    layer = Dense(4, 3, "relu", init="zeros")
    x = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(layer.forward(x), 0.0)


def test_dense_identity():
    layer = Dense(3, 3, "linear", init="zeros")
    layer.params["W"][...] = np.eye(3)
    x = np.random.default_rng(1).normal(size=(4, 3))
    np.testing.assert_array_equal(layer.forward(x), x)


def test_dense_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        Dense(4, 3).forward(np.zeros((2, 5)))


@pytest.mark.parametrize("activation", ["relu", "linear"])
def test_dense_gradient_check(activation):
    stack = LayerStack([Dense(4, 3, activation, np.random.default_rng(2))])
    X = np.random.default_rng(3).normal(size=(5, 4))
    res = gradient_check(stack, X)
    assert res.max_rel_error < 1e-5, res.worst
    assert res.n_checked > 0


def test_linear_layer_gradient_is_exact():
    stack = LayerStack([Dense(3, 1, "linear", np.random.default_rng(4))])
    X = np.random.default_rng(5).normal(size=(6, 3))
    res = gradient_check(stack, X, y=np.random.default_rng(6).normal(size=6))
    assert res.max_rel_error < 1e-8 and res.n_excluded == 0


def test_relu_kink_is_excluded_not_failed():
    layer = Dense(2, 2, "relu", init="zeros")
    layer.params["W"][0] = [1.0, -0.5]  # unit 1 keeps a zero pre-activation
    stack = LayerStack([layer, Dense(2, 1, "linear", np.random.default_rng(7))])
    res = gradient_check(stack, np.array([[0.3, 0.8]]))
    assert res.n_excluded > 0
    assert any(e.startswith("0.dense.W[1") for e in res.excluded)
    assert res.passed()


# MLP

def test_mlp_parameter_count():
    stack = build_mlp(17, 13, 32)
    assert stack.n_params() == 17 * 32 + 32 + 12 * (32 * 32 + 32) + 32 + 1
    assert stack.layers[0].params["W"].shape == (32, 17)
    assert len(stack.layers) == 14
    assert [l.activation for l in stack.layers] == ["relu"] * 13 + ["linear"]


def test_mlp_without_hidden_layers_is_linear():
    stack = build_mlp(5, hidden_layers=0)
    assert len(stack.layers) == 1 and stack.layers[0].activation == "linear"
    X = np.random.default_rng(8).normal(size=(4, 5))
    W, c = stack.layers[0].params["W"], stack.layers[0].params["c"]
    np.testing.assert_allclose(stack.forward(X), X @ W.T + c, rtol=1e-15)


def test_mlp_gradient_check():
    stack = build_mlp(4, hidden_layers=3, width=5, seed=9)
    res = gradient_check(stack, np.random.default_rng(10).normal(size=(3, 4)))
    assert res.passed(), res.worst


# CNN

def test_cnn_lengths():
    stack = build_cnn1d(17)
    x = np.random.default_rng(11).normal(size=(2, 17))
    shapes = []
    for layer in stack.layers:
        x = layer.forward(x)
        shapes.append(x.shape)
    assert shapes[1] == (2, 16, 64)
    assert shapes[2] == (2, 8, 64)
    assert shapes[3] == (2, 512)
    assert shapes[-1] == (2, 1)
    assert stack.layers[4].params["W"].shape == (50, 512)


def test_cnn_zero_weights_give_output_bias():
    stack = build_cnn1d(17)
    stack.flat_params[...] = 0.0
    stack.layers[-1].params["c"][...] = 0.375
    out = stack.forward(np.random.default_rng(12).normal(size=(3, 17)))
    np.testing.assert_array_equal(out, 0.375)


def test_cnn_too_short():
    with pytest.raises(SequenceTooShort):
        build_cnn1d(1)
    with pytest.raises(SequenceTooShort):
        build_cnn1d(2, kernel_size=2, pool=2)


def test_maxpool_definition():
    out = MaxPool1d(2).forward(np.array([1.0, 3.0, 2.0, 2.0]).reshape(1, 4, 1))
    assert out.ravel().tolist() == [3.0, 2.0]
    assert MaxPool1d(2).forward(np.arange(5.0).reshape(1, 5, 1)).ravel().tolist() == [1.0, 3.0]


def test_maxpool_gradient_goes_to_first_winner():
    pool = MaxPool1d(2)
    pool.forward(np.array([2.0, 2.0, 1.0, 4.0]).reshape(1, 4, 1))
    assert pool.backward(np.array([[[1.0], [1.0]]])).ravel().tolist() == [1.0, 0.0, 0.0, 1.0]


def test_conv_and_pool_gradient_check():
    stack = build_cnn1d(6, filters=3, kernel_size=2, pool=2, dense_width=4, seed=13)
    res = gradient_check(stack, np.random.default_rng(14).normal(size=(3, 6)))
    assert res.passed(), res.worst


def test_conv_multichannel_gradient_check():
    rng = np.random.default_rng(15)
    stack = LayerStack([Conv1d(2, 3, 3, "linear", rng), MaxPool1d(2)])
    res = gradient_check(stack, rng.normal(size=(2, 7, 2)))
    assert res.passed(), res.worst


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(16)
    conv = Conv1d(2, 3, 2, "linear", rng)
    conv.params["b"][...] = rng.normal(size=3)
    x = rng.normal(size=(1, 5, 2))
    out = conv.forward(x)
    W, b = conv.params["W"], conv.params["b"]
    for t in range(4):
        for f in range(3):
            direct = b[f] + sum(W[f, ch, k] * x[0, t + k, ch] for ch in range(2) for k in range(2))
            assert out[0, t, f] == pytest.approx(direct, abs=1e-14)


# LSTM

def test_zero_cell():
    cell = LSTMCell(2, 3, init="zeros", forget_bias=0.0)
    h, c, cache = lstm_step(cell, np.array([0.7, -1.2]), np.zeros((1, 3)), np.zeros((1, 3)))
    for gate in (cache.f, cache.i, cache.o):
        np.testing.assert_array_equal(gate, 0.5)
    np.testing.assert_array_equal(c, 0.0)
    np.testing.assert_array_equal(h, 0.0)


def test_saturated_forget_bias_keeps_cell():
    cell = LSTMCell(2, 3, init="zeros", forget_bias=50.0)
    c_prev = np.array([[0.4, -1.5, 2.0]])
    _, c, _ = lstm_step(cell, np.array([1.0, 2.0]), np.zeros((1, 3)), c_prev)
    np.testing.assert_array_equal(c, c_prev)


def test_step_matches_scalar_oracle():
    cell, x, h, c = cell_from_fixture()
    W, U, b = gate_dicts(cell)
    h_o, c_o, f_o, i_o, o_o = oracles.lstm_step_scalar(W, U, b, x.tolist(), h.tolist(), c.tolist())
    h_t, c_t, cache = lstm_step(cell, x, h[None, :], c[None, :])
    np.testing.assert_allclose(h_t[0], h_o, rtol=1e-13)
    np.testing.assert_allclose(c_t[0], c_o, rtol=1e-13)
    np.testing.assert_allclose(cache.f[0], f_o, rtol=1e-13)
    np.testing.assert_allclose(cache.i[0], i_o, rtol=1e-13)
    np.testing.assert_allclose(cache.o[0], o_o, rtol=1e-13)


def test_gate_views_follow_stacked_order():
    cell, *_ = cell_from_fixture()
    np.testing.assert_array_equal(cell.W_i, cell.params["W"][3:6])
    np.testing.assert_array_equal(cell.b_c, cell.params["b"][9:12])


def test_single_step_sequence_is_step_plus_head():
    stack = build_lstm(2, hidden=3, seed=17)
    x = np.random.default_rng(18).normal(size=(4, 1, 2))
    cell = stack.layers[0].cell
    h, _, _ = lstm_step(cell, x[:, 0, :], np.zeros((4, 3)), np.zeros((4, 3)))
    head = stack.layers[1]
    np.testing.assert_allclose(stack.forward(x), h @ head.params["W"].T + head.params["c"],
                               rtol=1e-15)


def test_zero_cell_sequence_gives_head_bias():
    stack = build_lstm(2, hidden=3)
    stack.flat_params[...] = 0.0
    stack.layers[1].params["c"][...] = -0.8
    out = stack.forward(np.random.default_rng(19).normal(size=(3, 4, 2)))
    np.testing.assert_array_equal(out, -0.8)


def test_forced_gates_hold_cell_state():
    cell, _, _, c0 = cell_from_fixture()
    cell.force_gates = {"f": 1.0, "i": 0.0}
    rng = np.random.default_rng(20)
    h, c = np.zeros((1, 3)), c0[None, :].copy()
    for _ in range(10):
        c_prev = c
        h, c, _ = lstm_step(cell, rng.normal(size=2), h, c)
        assert np.array_equal(c, c_prev)
    np.testing.assert_array_equal(c[0], c0)


def test_lstm_bptt_gradient_check():
    stack = LayerStack([LSTM(2, 4, np.random.default_rng(21), init="he"),
                        Dense(4, 1, "linear", np.random.default_rng(22))])
    X = np.random.default_rng(23).normal(size=(2, 3, 2))
    res = gradient_check(stack, X)
    assert res.max_rel_error < 1e-5, res.worst
    assert res.n_excluded == 0


def test_full_lstm_stack_gradient_check():
    stack = build_lstm(17, hidden=50, seed=24, init="he")
    X = np.random.default_rng(25).normal(size=(3, 1, 17))
    res = gradient_check(stack, X, y=np.random.default_rng(26).normal(size=3), check_input=False)
    assert res.max_rel_error < 1e-5, res.worst


@given(st.integers(0, 10_000), st.floats(0.1, 2.0))
def test_gate_ranges(seed, scale):
    rng = np.random.default_rng(seed)
    cell = LSTMCell(2, 3, rng, init="zeros")
    cell.params["W"][...] = rng.normal(scale=scale, size=(12, 2))
    cell.params["U"][...] = rng.normal(scale=scale, size=(12, 3))
    cell.params["b"][...] = rng.normal(scale=scale, size=12)
    h, c = np.zeros((1, 3)), np.zeros((1, 3))
    for _ in range(6):
        h, c, cache = lstm_step(cell, rng.normal(size=2), h, c)
        for gate in (cache.f, cache.i, cache.o):
            assert np.all((gate > 0) & (gate < 1))
        assert np.all(np.abs(h) < 1)


# training

def linear_data(n=64, seed=27):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    return X, X @ [0.5, -1.0, 2.0] + 0.25


def test_zero_learning_rate_is_no_op():
    X, y = linear_data()
    stack = build_mlp(3, hidden_layers=2, width=4, seed=1)
    before = stack.flat_params.copy()
    _, trace = train(stack, X, y, TrainConfig(epochs=5, lr=0.0, optimizer="sgd"))
    assert np.array_equal(stack.flat_params, before)
    assert len(set(trace.mse)) == 1


def test_linear_stack_learns_linear_data():
    X, y = linear_data()
    assert np.max(np.abs(fit_ols(X, y).predict(X) - y)) < 1e-12  # realizable
    stack = build_mlp(3, hidden_layers=0, seed=2)
    _, trace = train(stack, X, y, TrainConfig(epochs=500, batch_size=16, lr=0.01))
    assert len(trace) == 500
    assert trace.mse[-1] < 1e-3


def test_training_is_deterministic():
    X, y = linear_data()
    runs = []
    for _ in range(2):
        stack = build_cnn1d(3, filters=4, pool=1, dense_width=5, seed=3)
        _, trace = train(stack, X, y, TrainConfig(epochs=6, batch_size=8, seed=4))
        runs.append((stack.flat_params.tobytes(), trace))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]


def test_divergence_aborts_with_trace():
    X, y = linear_data()
    stack = build_mlp(3, hidden_layers=2, width=8, seed=5)
    with pytest.raises(DivergedLoss) as info:
        train(stack, X * 1e3, y, TrainConfig(epochs=50, lr=10.0, optimizer="sgd"))
    assert len(info.value.trace) == info.value.epoch - 1


def test_bad_train_config():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


# regressor wrapper and serialization

@pytest.mark.parametrize("kind,arch", [("mlp", {"hidden_layers": 2, "width": 6}),
                                       ("cnn1d", {"filters": 4, "dense_width": 5}),
                                       ("lstm", {"hidden": 5, "lookback": 2})])
def test_regressor_round_trip(kind, arch, tmp_path):
    X, y = linear_data(40)
    m = NeuralRegressor(kind, epochs=3, batch_size=8, **arch).fit(X, y)
    m.save(tmp_path / "net.json")
    assert (tmp_path / "net.bin").is_file() and (tmp_path / "net_trace.csv").is_file()
    back = load_model(tmp_path / "net.json")
    assert back.predict(X).tobytes() == m.predict(X).tobytes()
    assert back.trace_ == m.trace_


def test_stack_binary_round_trip(tmp_path):
    stack = build_lstm(4, hidden=3, seed=6)
    manifest = save_stack(stack, tmp_path / "s.bin")
    back = load_stack(tmp_path / "s.bin", manifest)
    assert back.flat_params.tobytes() == stack.flat_params.tobytes()
    data = (tmp_path / "s.bin").read_bytes()
    assert data[:8] == b"WBNN0001"
    assert len(data) == 8 + 4 + 8 * 5 + 8 * stack.n_params()  # five tensors


def test_unknown_network_parameter():
    with pytest.raises(TypeError):
        NeuralRegressor("mlp", filters=3)
    with pytest.raises(ValueError):
        NeuralRegressor("transformer")


def test_bptt_against_plain_central_differences():
    # second opinion that shares no code with gradient_check
    rng = np.random.default_rng(28)
    stack = LayerStack([LSTM(2, 4, rng, init="he"), Dense(4, 1, "linear", rng)])
    X = rng.normal(size=(2, 3, 2))
    y = rng.normal(size=(2, 1))

    def loss():
        return float(np.sum((stack.forward(X) - y) ** 2))

    stack.zero_grad()
    stack.backward(2.0 * (stack.forward(X) - y))
    arrays = [v for _, v, _, _ in stack.named_params()]
    numeric = oracles.central_differences(loss, arrays)
    for (key, _, grads, name), fd in zip(stack.named_params(), numeric):
        np.testing.assert_allclose(grads[name], fd, rtol=1e-5, atol=1e-8, err_msg=key)
