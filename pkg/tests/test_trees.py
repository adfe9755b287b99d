import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

import fixtures
import oracles
from windbench.base import Regressor
from windbench.metrics import r2
from windbench.trees import (AdaBoostR2, BaggingRegressor, RandomForestRegressor, RegressionTree,
                             best_split, fit_adaboost_r2, fit_bagging, fit_random_forest, fit_tree,
                             weighted_median)

# Root and first two levels of the exhaustive-split tree on tree_40x3, depth 3
TREE_40x3_SPLITS = {
    (): (0, -0.15000000000000002),
    ("L",): (2, 1.0350000000000001),
    ("L", "L"): (1, -0.965),
    ("L", "R"): (0, -1.5499999999999998),
    ("R",): (1, -1.325),
    ("R", "L"): (0, 1.5150000000000001),
    ("R", "R"): (1, 0.7999999999999999),
}
ADABOOST_20_BETAS = [0.8417891839320507, 0.8946802791583609, 0.6757590224767994]


def same_tree(a, b, path=()):
    """Identical structure and thresholds; leaf means equal up to summation order."""
    assert ("feature" in a) == ("feature" in b), path
    assert a["n"] == b["n"], path
    assert a["value"] == pytest.approx(b["value"], abs=1e-12), path
    if "feature" in a:
        assert (a["feature"], a["threshold"]) == (b["feature"], b["threshold"]), path
        same_tree(a["left"], b["left"], path + ("L",))
        same_tree(a["right"], b["right"], path + ("R",))


def splits_of(node, path=()):
    if "feature" not in node:
        return {}
    out = {path: (node["feature"], node["threshold"])}
    out.update(splits_of(node["left"], path + ("L",)))
    out.update(splits_of(node["right"], path + ("R",)))
    return out


# single tree

def test_constant_target_is_one_leaf():
    X = np.random.default_rng(0).normal(size=(15, 2))
    t = fit_tree(X, np.full(15, 2.5))
    assert t.node_count == 1
    np.testing.assert_array_equal(t.predict(X[:3]), 2.5)


def test_step_data_single_split():
    x = np.array([-3.0, -2.0, -0.5, 0.0, 1.0, 4.0])[:, None]
    y = (x[:, 0] >= 0).astype(float)
    t = fit_tree(x, y, max_depth=1)
    root = t.to_nested()
    assert root["feature"] == 0 and root["threshold"] == -0.25
    assert (root["left"]["value"], root["right"]["value"]) == (0.0, 1.0)


def test_frozen_bruteforce_tree():
    X, y = fixtures.tree_40x3()
    nested = fit_tree(X, y, max_depth=3).to_nested()
    assert splits_of(nested) == TREE_40x3_SPLITS
    same_tree(nested, oracles.tree_bruteforce(X, y, 3))


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3))
def test_matches_bruteforce(seed, depth, leaf):
    rng = np.random.default_rng(seed)
    X = np.round(rng.uniform(-1, 1, size=(18, 2)), 1)  # coarse grid forces ties
    y = np.round(rng.normal(size=18), 1)
    same_tree(RegressionTree(depth, leaf).fit(X, y).to_nested(),
              oracles.tree_bruteforce(X, y, depth, leaf))


def test_tie_breaks_to_lowest_feature():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    f, thr, _ = best_split(X, np.array([0.0, 0.0, 1.0, 1.0]), [0, 1])
    assert (f, thr) == (0, 0.5)


def test_tie_breaks_to_lowest_threshold():
    # splitting at 0.5 or 2.5 isolates one of two symmetric points
    x = np.array([0.0, 1.0, 2.0, 3.0])[:, None]
    f, thr, _ = best_split(x, np.array([1.0, 0.0, 0.0, 1.0]), [0])
    assert thr == 0.5


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_leaf_invariants(seed, leaf):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    t = RegressionTree(min_samples_leaf=leaf).fit(X, y)
    leaves = t.apply(X)
    counts = np.bincount(leaves, minlength=t.node_count)
    assert np.all(counts[t.feature_ < 0] >= leaf)
    Q = rng.normal(scale=3.0, size=(50, 3))
    for q, node in zip(t.predict(Q), t.apply(Q)):
        ys = y[leaves == node]
        assert ys.min() - 1e-12 <= q <= ys.max() + 1e-12


def test_monotone_data_fits_exactly():
    x = np.arange(50.0)[:, None]
    for m in (fit_tree(x, x[:, 0]), fit_bagging(x, x[:, 0], 5, bootstrap=False)):
        assert r2(x[:, 0], m.predict(x)) == 1.0


# bagging / random forest

def test_bagging_single_tree_without_bootstrap():
    X, y = fixtures.tree_40x3()
    b = BaggingRegressor(n_estimators=1, bootstrap=False, max_depth=4).fit(X, y)
    t = fit_tree(X, y, max_depth=4)
    assert b.predict(X).tobytes() == t.predict(X).tobytes()


def test_bagging_constant_target():
    X = np.random.default_rng(1).normal(size=(20, 3))
    m = fit_bagging(X, np.full(20, -1.25), 10)
    np.testing.assert_array_equal(m.predict(np.random.default_rng(2).normal(size=(5, 3))), -1.25)


@pytest.mark.parametrize("klass", [BaggingRegressor, RandomForestRegressor, AdaBoostR2])
def test_same_seed_bit_identical(klass):
    X, y = fixtures.tree_40x3()
    a = klass(n_estimators=8, seed=3).fit(X, y).predict(X)
    b = klass(n_estimators=8, seed=3).fit(X, y).predict(X)
    assert a.tobytes() == b.tobytes()
    assert len(klass(n_estimators=8, seed=3).fit(X, y).estimators_) <= 8


def test_ensemble_size():
    X, y = fixtures.tree_40x3()
    assert len(fit_bagging(X, y, 7).estimators_) == 7
    assert len(fit_random_forest(X, y, 6).estimators_) == 6


def test_trees_independent_of_scheduling():
    # tree i depends only on (seed, i): fitting a longer ensemble leaves its prefix unchanged
    X, y = fixtures.tree_40x3()
    short = fit_random_forest(X, y, 3, seed=9)
    long = fit_random_forest(X, y, 6, seed=9)
    for a, b in zip(short.estimators_, long.estimators_):
        assert a.to_nested() == b.to_nested()


def test_forest_with_all_features_is_bagging():
    X, y = fixtures.tree_40x3()
    rf = fit_random_forest(X, y, 5, max_features=3, seed=4)
    bg = fit_bagging(X, y, 5, seed=4)
    assert rf.predict(X).tobytes() == bg.predict(X).tobytes()


@pytest.mark.parametrize("k", [None, 1])
def test_forest_one_feature_is_bagging(k):
    X, y = fixtures.lasso_1d()
    rf = fit_random_forest(X, y, 5, max_features=k, seed=2)
    bg = fit_bagging(X, y, 5, seed=2)
    assert rf.predict(X).tobytes() == bg.predict(X).tobytes()


def test_forest_bad_max_features():
    X, y = fixtures.tree_40x3()
    with pytest.raises(ValueError):
        fit_random_forest(X, y, 2, max_features=4)


@given(st.integers(0, 1000), st.randoms(use_true_random=False))
def test_mean_prediction_bounds_and_order(seed, rnd):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    m = fit_bagging(X, y, 6, seed=seed)
    Q = rng.normal(scale=4.0, size=(20, 2))
    p = m.predict(Q)
    assert np.all((p >= y.min() - 1e-12) & (p <= y.max() + 1e-12))
    rnd.shuffle(m.estimators_)
    np.testing.assert_allclose(m.predict(Q), p, rtol=0, atol=1e-12)


def test_forest_friedman_fixture():
    rng = np.random.default_rng(21)

    def draw(n):
        X = rng.uniform(size=(n, 5))
        y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
             + 10 * X[:, 3] + 5 * X[:, 4] + rng.normal(size=n))
        return X, y

    X, y = draw(1000)
    Xt, yt = draw(500)
    m = fit_random_forest(X, y, 100, seed=0)
    assert r2(yt, m.predict(Xt)) >= 0.85


# AdaBoost.R2

def test_adaboost_matches_hand_stepped_oracle():
    X, y = fixtures.adaboost_20()
    m = fit_adaboost_r2(X, y, 3, seed=0, max_depth=1)
    np.testing.assert_allclose(m.betas_, ADABOOST_20_BETAS, rtol=1e-12)
    trees, betas, weights = oracles.adaboost_r2_by_hand(X, y, 3, seed=0, max_depth=1)
    np.testing.assert_allclose(m.betas_, betas, rtol=1e-12)
    np.testing.assert_allclose(m.estimator_weights_, weights, rtol=1e-12)
    for ours, theirs in zip(m.estimators_, trees):
        same_tree(ours.to_nested(), theirs)
    Q = np.random.default_rng(5).uniform(size=(10, 2))
    expected = [oracles.weighted_median_bruteforce([oracles.nested_predict(t, q) for t in trees],
                                                   weights) for q in Q]
    np.testing.assert_allclose(m.predict(Q), expected, rtol=1e-12)


def test_adaboost_perfect_fit_clamps_beta():
    x = np.array([0.0, 0.0, 1.0, 1.0, 2.0, 2.0])[:, None]
    y = np.array([5.0, 5.0, 6.0, 6.0, 9.0, 9.0])
    one = fit_adaboost_r2(x, y, 1, max_depth=None)
    many = fit_adaboost_r2(x, y, 6, max_depth=None)
    assert one.betas_[0] == 1e-10 and one.losses_[0] == 0.0
    Q = np.linspace(-1, 3, 17)[:, None]
    assert many.predict(Q).tobytes() == one.predict(Q).tobytes()


def test_adaboost_one_round_is_weighted_tree():
    X, y = fixtures.adaboost_20()
    m = fit_adaboost_r2(X, y, 1, seed=7)
    rows = np.minimum(np.searchsorted(np.arange(1, 21) / 20,
                                      np.random.default_rng([7, 0]).random(20), side="right"), 19)
    t = fit_tree(X[rows], y[rows], max_depth=3)
    assert m.predict(X).tobytes() == t.predict(X).tobytes()


def test_adaboost_first_round_rejected_falls_back():
    # one far outlier: the single split isolates it, leaving loss >= 0.5 elsewhere
    x = np.arange(10.0)[:, None]
    y = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
    with pytest.warns(Warning, match="first AdaBoost.R2 round"):
        m = fit_adaboost_r2(x, y, 5, max_depth=1, seed=0)
    assert m.convergence_["flag"] == "all_rounds_rejected"
    assert len(m.estimators_) == 1


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=9),
       st.lists(st.integers(1, 5), min_size=9, max_size=9))
def test_weighted_median_bruteforce(values, weights):
    w = weights[: len(values)]
    got = weighted_median(np.array(values), np.array(w, dtype=float))[0]
    assert got == oracles.weighted_median_bruteforce(values, w)


@given(st.integers(0, 1000), st.randoms(use_true_random=False))
def test_weighted_median_pair_order_invariance(seed, rnd):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(4, 7))
    w = rng.uniform(0.1, 2.0, size=7)
    perm = list(range(7))
    rnd.shuffle(perm)
    np.testing.assert_array_equal(weighted_median(v, w), weighted_median(v[:, perm], w[perm]))


# serialization

@pytest.mark.parametrize("make", [lambda: RegressionTree(max_depth=4),
                                  lambda: BaggingRegressor(5), lambda: RandomForestRegressor(5),
                                  lambda: AdaBoostR2(5)])
def test_json_round_trip(make, tmp_path):
    X, y = fixtures.tree_40x3()
    m = make().fit(X, y)
    m.save(tmp_path / "m.json")
    back = Regressor.from_dict(json.loads((tmp_path / "m.json").read_text()))
    Q = np.random.default_rng(6).normal(size=(25, 3))
    assert back.predict(Q).tobytes() == m.predict(Q).tobytes()
