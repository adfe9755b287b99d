"""Seeded fixtures shared by the tests and by the oracle runs that froze
their expected values."""

import numpy as np


def ols_50x3():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(50, 3))
    y = X @ np.array([1.5, -2.0, 0.5]) + 3.0 + 0.3 * rng.normal(size=50)
    return X, y


def ridge_20x2():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(20, 2))
    X[:, 1] = 0.9 * X[:, 0] + 0.1 * X[:, 1]  # collinear enough that alpha matters
    y = 2.0 * X[:, 0] - X[:, 1] + 1.0 + 0.2 * rng.normal(size=20)
    return X, y


def lasso_1d():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(30, 1))
    y = 0.7 * x[:, 0] + 0.5 * rng.normal(size=30)
    return x, y


def bayes_30x2():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(30, 2))
    y = X @ np.array([0.8, -0.3]) + 0.5 + 0.4 * rng.normal(size=30)
    return X, y


def tree_40x3():
    rng = np.random.default_rng(15)
    X = np.round(rng.uniform(-2, 2, size=(40, 3)), 2)
    y = np.where(X[:, 0] > 0.3, 2.0, -1.0) + X[:, 1] ** 2 + 0.1 * rng.normal(size=40)
    return X, y


def adaboost_20():
    rng = np.random.default_rng(16)
    X = rng.uniform(0, 1, size=(20, 2))
    y = np.sin(4 * X[:, 0]) + X[:, 1] + 0.1 * rng.normal(size=20)
    return X, y


def svr_15():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(15, 2))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + 0.1 * rng.normal(size=15)
    return X, y


def lstm_cell_params(hidden=3, d=2, seed=18, scale=0.5):
    rng = np.random.default_rng(seed)
    W = rng.normal(scale=scale, size=(4 * hidden, d))
    U = rng.normal(scale=scale, size=(4 * hidden, hidden))
    b = rng.normal(scale=scale, size=4 * hidden)
    x = rng.normal(size=d)
    h = rng.uniform(-0.5, 0.5, size=hidden)
    c = rng.normal(size=hidden)
    return W, U, b, x, h, c
