"""CART regression trees and the three ensembles built on them: bagging,
random forest and Drucker's AdaBoost.R2.

Every tree draws from its own generator seeded by ``(seed, tree_index)``,
so an ensemble is reproducible no matter how the trees are scheduled.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .base import Regressor
from .errors import ConvergenceWarning

BETA_FLOOR = 1e-10


def tree_rng(seed, index):
    return np.random.default_rng([int(seed), int(index)])


def best_split(X, y, features, min_samples_leaf=1):
    """Best variance-reduction split of one node over the given columns.

    Candidates are midpoints between consecutive distinct sorted values.
    Ties go to the lowest feature index, then the lowest threshold.
    Returns ``(feature, threshold, gain)`` or None when no admissible split
    reduces the squared error.
    """
    m = len(y)
    if m < 2 * min_samples_leaf:
        return None
    features = np.asarray(features)
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    yc = y - y.mean()
    left_sum = np.cumsum(yc[order], axis=0)[:-1]
    total = left_sum[-1] + yc[order[-1]]
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    n_right = m - n_left
    score = left_sum ** 2 / n_left + (total - left_sum) ** 2 / n_right
    ok = xs[1:] > xs[:-1]
    if min_samples_leaf > 1:
        ok[: min_samples_leaf - 1] = False
        ok[m - min_samples_leaf:] = False
    score = np.where(ok, score, -np.inf)
    # feature-major flattening so the first hit is the lowest feature, then position.
    # Gains equal up to rounding count as ties; y is centred, so score ~ gain.
    flat = score.T.ravel()
    top = flat.max()
    if not np.isfinite(top):
        return None
    k = int(np.argmax(flat >= top - (1e-12 * abs(top) + 1e-14)))
    gain = flat[k] - total[k // (m - 1)] ** 2 / m
    if not np.isfinite(gain) or gain <= 0.0:
        return None
    j, pos = divmod(k, m - 1)
    thr = 0.5 * (xs[pos, j] + xs[pos + 1, j])
    if not thr < xs[pos + 1, j]:  # adjacent floats: midpoint rounds up
        thr = xs[pos, j]
    return int(features[j]), float(thr), float(gain)


class RegressionTree(Regressor):
    """Greedy CART regressor.

    ``max_features`` (None = all) draws a fresh uniform feature subset at
    every node from the generator passed to ``fit``.
    """

    model_type = "regression_tree"

    def __init__(self, max_depth=None, min_samples_leaf=1, max_features=None):
        super().__init__()
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features

    def get_params(self):
        return {"max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "max_features": self.max_features}

    def fit(self, X, y, rng=None):
        self._rng = rng if rng is not None else np.random.default_rng(0)
        try:
            return super().fit(X, y)
        finally:
            del self._rng

    def _fit(self, X, y):
        if len(y) < self.min_samples_leaf:
            raise ValueError("fewer rows than min_samples_leaf")
        d = X.shape[1]
        k = d if self.max_features is None else min(int(self.max_features), d)
        if k < 1:
            raise ValueError("max_features must be at least 1")
        feature, threshold, left, right, value, count = [], [], [], [], [], []
        all_features = np.arange(d)
        max_depth = math.inf if self.max_depth is None else self.max_depth

        def grow(rows, depth):
            node = len(feature)
            yn = y[rows]
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(yn.mean()))
            count.append(len(rows))
            if depth >= max_depth or np.all(yn == yn[0]):
                return node
            if k < d:
                feats = np.sort(self._rng.choice(d, size=k, replace=False))
            else:
                feats = all_features
            found = best_split(X[rows], yn, feats, self.min_samples_leaf)
            if found is None:
                return node
            f, thr, _ = found
            go_left = X[rows, f] <= thr
            feature[node] = f
            threshold[node] = thr
            left[node] = grow(rows[go_left], depth + 1)
            right[node] = grow(rows[~go_left], depth + 1)
            return node

        grow(np.arange(len(y)), 0)
        self.feature_ = np.array(feature, dtype=np.intp)
        self.threshold_ = np.array(threshold, dtype=np.float64)
        self.left_ = np.array(left, dtype=np.intp)
        self.right_ = np.array(right, dtype=np.intp)
        self.value_ = np.array(value, dtype=np.float64)
        self.n_node_samples_ = np.array(count, dtype=np.intp)

    def apply(self, X):
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while rows.size:
            f = self.feature_[node[rows]]
            internal = f >= 0
            rows, f = rows[internal], f[internal]
            here = node[rows]
            go_left = X[rows, f] <= self.threshold_[here]
            node[rows] = np.where(go_left, self.left_[here], self.right_[here])
        return node

    def _predict(self, X):
        return self.value_[self.apply(X)]

    @property
    def node_count(self):
        return len(self.feature_)

    @property
    def depth(self):
        def walk(i):
            if self.feature_[i] < 0:
                return 0
            return 1 + max(walk(self.left_[i]), walk(self.right_[i]))
        return walk(0)

    def to_nested(self, i=0) -> dict:
        if self.feature_[i] < 0:
            return {"value": float(self.value_[i]), "n": int(self.n_node_samples_[i])}
        return {"feature": int(self.feature_[i]), "threshold": float(self.threshold_[i]),
                "value": float(self.value_[i]), "n": int(self.n_node_samples_[i]),
                "left": self.to_nested(self.left_[i]), "right": self.to_nested(self.right_[i])}

    def _state(self):
        return {"root": self.to_nested()}

    def _load_state(self, d):
        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def visit(rec):
            node = len(feature)
            feature.append(rec.get("feature", -1))
            threshold.append(rec.get("threshold", 0.0))
            left.append(-1)
            right.append(-1)
            value.append(rec["value"])
            count.append(rec["n"])
            if "left" in rec:
                left[node] = visit(rec["left"])
                right[node] = visit(rec["right"])
            return node

        visit(d["root"])
        self.feature_ = np.array(feature, dtype=np.intp)
        self.threshold_ = np.array(threshold, dtype=np.float64)
        self.left_ = np.array(left, dtype=np.intp)
        self.right_ = np.array(right, dtype=np.intp)
        self.value_ = np.array(value, dtype=np.float64)
        self.n_node_samples_ = np.array(count, dtype=np.intp)


def fit_tree(X, y, max_depth=None, min_samples_leaf=1, rng=None) -> RegressionTree:
    return RegressionTree(max_depth, min_samples_leaf).fit(X, y, rng=rng)


class _TreeEnsemble(Regressor):
    def _tree_params(self):
        return {"max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf}

    def _state(self):
        return {"trees": [t.to_nested() for t in self.estimators_]}

    def _load_state(self, d):
        self.estimators_ = []
        for root in d["trees"]:
            t = RegressionTree(**self._tree_params())
            t._load_state({"root": root})
            t.n_features_ = self.n_features_
            t.fitted_ = True
            self.estimators_.append(t)


class BaggingRegressor(_TreeEnsemble):
    """Bootstrap-aggregated trees; prediction is the plain mean."""

    model_type = "bagging"

    def __init__(self, n_estimators=100, max_depth=None, min_samples_leaf=1, bootstrap=True, seed=0):
        super().__init__()
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.seed = seed

    def get_params(self):
        return {"n_estimators": self.n_estimators, "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf, "bootstrap": self.bootstrap,
                "seed": self.seed}

    def _max_features(self, d):
        return None

    def _fit_one(self, X, y, index):
        rng = tree_rng(self.seed, index)
        n = len(y)
        rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
        tree = RegressionTree(max_features=self._max_features(X.shape[1]), **self._tree_params())
        return tree.fit(X[rows], y[rows], rng=rng)

    def _fit(self, X, y):
        if len(y) < 2:
            raise ValueError("bagging needs at least two rows")
        self.estimators_ = [self._fit_one(X, y, i) for i in range(self.n_estimators)]

    def _predict(self, X):
        out = np.zeros(len(X))
        for t in self.estimators_:
            out += t.predict(X)
        return out / len(self.estimators_)


class RandomForestRegressor(BaggingRegressor):
    """Bagging plus a per-node random feature subset (default ceil(d/3))."""

    model_type = "random_forest"

    def __init__(self, n_estimators=100, max_features=None, max_depth=None, min_samples_leaf=1,
                 bootstrap=True, seed=0):
        super().__init__(n_estimators, max_depth, min_samples_leaf, bootstrap, seed)
        self.max_features = max_features

    def get_params(self):
        return {**super().get_params(), "max_features": self.max_features}

    def _max_features(self, d):
        k = math.ceil(d / 3) if self.max_features is None else int(self.max_features)
        if not 1 <= k <= d:
            raise ValueError(f"max_features must be in [1, {d}], got {k}")
        return None if k == d else k


def fit_bagging(X, y, n_estimators=100, seed=0, **params) -> BaggingRegressor:
    return BaggingRegressor(n_estimators, seed=seed, **params).fit(X, y)


def fit_random_forest(X, y, n_estimators=100, max_features=None, seed=0, **params):
    return RandomForestRegressor(n_estimators, max_features, seed=seed, **params).fit(X, y)


def weighted_median(values, weights):
    """Row-wise lower weighted median of ``values`` (m, T) with weights (T,).

    Picks the first sorted value whose cumulative weight reaches half the
    total, which minimizes sum_t w_t |v_t - m|.
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    order = np.argsort(values, axis=1, kind="stable")
    cw = np.cumsum(weights[order], axis=1)
    pick = np.argmax(cw >= 0.5 * cw[:, -1:], axis=1)
    return values[np.arange(len(values)), order[np.arange(len(values)), pick]]


class AdaBoostR2(_TreeEnsemble):
    """Drucker's AdaBoost.R2 with the linear loss.

    Each round fits a tree to a weight-proportional bootstrap, scores every
    training row by |error| / max|error|, and stops once the weighted mean
    loss reaches 0.5. Prediction is the weighted median of the trees with
    weights learning_rate * ln(1/beta).
    """

    model_type = "adaboost_r2"

    def __init__(self, n_estimators=100, learning_rate=1.0, max_depth=3, min_samples_leaf=1, seed=0):
        super().__init__()
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def get_params(self):
        return {"n_estimators": self.n_estimators, "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "seed": self.seed}

    def _fit(self, X, y):
        n = len(y)
        if n < 2:
            raise ValueError("AdaBoost.R2 needs at least two rows")
        w = np.full(n, 1.0 / n)
        self.estimators_, self.estimator_weights_, self.betas_, self.losses_ = [], [], [], []
        flag = "ok"
        for t in range(self.n_estimators):
            rng = tree_rng(self.seed, t)
            cdf = np.cumsum(w)
            cdf /= cdf[-1]
            rows = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), n - 1)
            tree = RegressionTree(**self._tree_params()).fit(X[rows], y[rows], rng=rng)
            err = np.abs(tree.predict(X) - y)
            worst = err.max()
            loss = err / worst if worst > 0 else np.zeros(n)
            avg = float(np.sum(w * loss))
            if avg >= 0.5:
                if t == 0:
                    flag = "all_rounds_rejected"
                    warnings.warn("first AdaBoost.R2 round already has mean loss >= 0.5; "
                                  "falling back to that single tree", ConvergenceWarning, stacklevel=3)
                    self.estimators_.append(tree)
                    self.estimator_weights_.append(1.0)
                    self.betas_.append(1.0)
                    self.losses_.append(avg)
                else:
                    flag = "stopped_early"
                break
            beta = max(avg / (1.0 - avg), BETA_FLOOR)
            self.estimators_.append(tree)
            self.estimator_weights_.append(self.learning_rate * math.log(1.0 / beta))
            self.betas_.append(beta)
            self.losses_.append(avg)
            w = w * beta ** ((1.0 - loss) * self.learning_rate)
            w /= w.sum()
        self.convergence_ = {"iters": len(self.estimators_), "flag": flag}

    def _predict(self, X):
        preds = np.column_stack([t.predict(X) for t in self.estimators_])
        return weighted_median(preds, np.array(self.estimator_weights_))

    def _state(self):
        return {**super()._state(), "estimator_weights": list(self.estimator_weights_),
                "betas": list(self.betas_), "losses": list(self.losses_)}

    def _load_state(self, d):
        super()._load_state(d)
        self.estimator_weights_ = list(d["estimator_weights"])
        self.betas_ = list(d["betas"])
        self.losses_ = list(d["losses"])


def fit_adaboost_r2(X, y, n_estimators=100, learning_rate=1.0, seed=0, **params) -> AdaBoostR2:
    return AdaBoostR2(n_estimators, learning_rate, seed=seed, **params).fit(X, y)
