import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import fixtures
import oracles
from windbench.base import Regressor
from windbench.errors import NotFittedError
from windbench.svr import SVR, fit_svr, kernel_matrix, predict_svr

# svr_15 fixture, default C/epsilon/gamma, SMO tol 1e-8
SVR_15_DUAL_OBJECTIVE = -2.6668057733220016
SVR_15_GAMMA = 0.33259813063418253


def test_constant_target_has_no_support_vectors():
    X = np.random.default_rng(0).normal(size=(12, 2))
    m = fit_svr(X, np.full(12, 3.25), epsilon=0.1)
    assert len(m.dual_coef_) == 0
    assert m.intercept_ == pytest.approx(3.25, abs=1e-12)
    np.testing.assert_allclose(m.predict(np.random.default_rng(1).normal(size=(4, 2))), 3.25,
                               atol=1e-12)


def test_linear_kernel_exact_line():
    x = np.linspace(-1, 1, 11)[:, None]
    y = 2 * x[:, 0]
    m = fit_svr(x, y, C=1000.0, epsilon=0.0, kernel="linear", tol=1e-8)
    assert np.max(np.abs(m.predict(x) - y)) < 1e-3


def test_dual_objective_frozen_and_live_oracle():
    X, y = fixtures.svr_15()
    m = fit_svr(X, y, tol=1e-8)
    assert m.gamma_ == pytest.approx(SVR_15_GAMMA, rel=1e-14)
    assert m.dual_objective_ == pytest.approx(SVR_15_DUAL_OBJECTIVE, abs=1e-4)
    K = kernel_matrix(X, X, "rbf", m.gamma_)
    _, _, obj = oracles.svr_dual_projected_gradient(K, y, 1.0, 0.1, iters=20_000)
    assert m.dual_objective_ == pytest.approx(obj, abs=1e-4)
    # default stopping tolerance is still well inside the bound
    assert fit_svr(X, y).dual_objective_ == pytest.approx(obj, abs=1e-4)


@given(st.integers(0, 10_000), st.floats(0.1, 10.0), st.floats(0.0, 0.5))
def test_dual_feasibility(seed, C, eps):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 3))
    y = np.sin(X[:, 0]) + rng.normal(scale=0.3, size=20)
    m = fit_svr(X, y, C=C, epsilon=eps)
    assert abs(m.dual_coef_.sum()) < 1e-8
    assert np.all(np.abs(m.dual_coef_) <= C + 1e-12)
    assert m.convergence_["flag"] == "ok"


def test_tube_points_carry_no_weight():
    X, y = fixtures.svr_15()
    m = fit_svr(X, y, epsilon=0.2, tol=1e-6)
    beta = np.zeros(len(y))
    beta[m.support_] = m.dual_coef_
    inside = np.abs(y - m.predict(X)) < 0.2 - 1e-3
    assert inside.any()
    assert np.all(beta[inside] == 0.0)


@given(st.integers(0, 10_000), st.floats(0.01, 5.0))
def test_rbf_kernel_symmetry(seed, gamma):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 4))
    K = kernel_matrix(A, A, "rbf", gamma)
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_array_equal(np.diag(K), 1.0)
    assert K[0, 1] == pytest.approx(oracles.rbf(A[0], A[1], gamma), rel=1e-12)


def test_gamma_scale_heuristic():
    X = np.random.default_rng(2).normal(size=(30, 4)) * [1.0, 2.0, 0.5, 3.0]
    m = fit_svr(X, X[:, 0])
    assert m.gamma_ == pytest.approx(1.0 / (4 * X.var()), rel=1e-14)


def test_single_support_vector_at_its_own_point():
    X, y = fixtures.svr_15()
    m = fit_svr(X, y)
    m.support_vectors_ = m.support_vectors_[:1]
    m.dual_coef_ = m.dual_coef_[:1]
    got = m.predict(m.support_vectors_)[0]
    assert got == pytest.approx(m.dual_coef_[0] + m.intercept_, rel=1e-14)


def test_hand_expanded_kernel_sum():
    X, y = fixtures.svr_15()
    m = fit_svr(X, y)
    Q = np.random.default_rng(3).normal(size=(5, 2))
    for q, got in zip(Q, predict_svr(m, Q)):
        total = m.intercept_
        for sv, coef in zip(m.support_vectors_, m.dual_coef_):
            total += coef * math.exp(-m.gamma_ * sum((a - b) ** 2 for a, b in zip(sv, q)))
        assert got == pytest.approx(total, abs=1e-12)


def test_max_iter_is_flagged():
    X, y = fixtures.svr_15()
    with pytest.warns(Warning, match="max_iter"):
        m = fit_svr(X, y, max_iter=2)
    assert m.convergence_["flag"] == "not_converged"


def test_bad_params_and_unfitted():
    with pytest.raises(ValueError):
        SVR(C=0.0)
    with pytest.raises(ValueError):
        SVR(epsilon=-1.0)
    with pytest.raises(NotFittedError):
        SVR().predict(np.zeros((1, 2)))


@pytest.mark.parametrize("kernel", ["rbf", "linear", "poly"])
def test_json_round_trip(kernel, tmp_path):
    X, y = fixtures.svr_15()
    m = fit_svr(X, y, kernel=kernel)
    m.save(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert {"support_vectors", "dual_coef", "intercept"} <= d.keys()
    back = Regressor.from_dict(d)
    assert back.predict(X).tobytes() == m.predict(X).tobytes()


def test_against_sklearn():
    svm = pytest.importorskip("sklearn.svm")
    X, y = fixtures.svr_15()
    ref = svm.SVR(C=1.0, epsilon=0.1, gamma="scale", tol=1e-8).fit(X, y)
    ours = fit_svr(X, y, tol=1e-8)
    Q = np.random.default_rng(4).normal(size=(20, 2))
    np.testing.assert_allclose(ours.predict(Q), ref.predict(Q), atol=1e-5)
