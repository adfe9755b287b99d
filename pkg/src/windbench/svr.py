"""Epsilon-insensitive support vector regression solved by SMO.

The dual is written over 2l variables a = [alpha, alpha*] with labels
s = [+1]*l + [-1]*l:

    min_a  0.5 a^T Q a + p^T a,   s^T a = 0,   0 <= a <= C
    Q_ij = s_i s_j K(x_{i mod l}, x_{j mod l}),   p = [eps - y, eps + y]

Working pairs are picked with second-order (WSS3) selection; the kernel
matrix is computed once up front.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial.distance import cdist

from .base import Regressor
from .errors import ConvergenceWarning

TAU = 1e-12


def kernel_matrix(A, B, kernel="rbf", gamma=1.0, degree=3, coef0=0.0):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if kernel == "linear":
        return A @ B.T
    if kernel == "poly":
        return (gamma * (A @ B.T) + coef0) ** degree
    if kernel == "rbf":
        # direct differences keep K(a, a) = 1 and K symmetric to the last bit
        return np.exp(-gamma * cdist(A, B, "sqeuclidean"))
    raise ValueError(f"unknown kernel {kernel!r}")


class SVR(Regressor):
    model_type = "svr"

    def __init__(self, C=1.0, epsilon=0.1, kernel="rbf", gamma="scale", degree=3, coef0=0.0,
                 tol=1e-3, max_iter=100_000):
        super().__init__()
        if C <= 0:
            raise ValueError("C must be positive")
        if epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        self.C = float(C)
        self.epsilon = float(epsilon)
        self.kernel = kernel
        self.gamma = gamma
        self.degree = degree
        self.coef0 = coef0
        self.tol = tol
        self.max_iter = max_iter

    def get_params(self):
        return {"C": self.C, "epsilon": self.epsilon, "kernel": self.kernel, "gamma": self.gamma,
                "degree": self.degree, "coef0": self.coef0, "tol": self.tol,
                "max_iter": self.max_iter}

    def _resolve_gamma(self, X):
        if self.gamma == "scale":
            var = X.var()
            return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return float(self.gamma)

    def _kernel(self, A, B):
        return kernel_matrix(A, B, self.kernel, self.gamma_, self.degree, self.coef0)

    def _fit(self, X, y):
        l = len(y)
        self.gamma_ = self._resolve_gamma(X)
        K = self._kernel(X, X)
        C = self.C
        s = np.concatenate([np.ones(l), -np.ones(l)])
        p = np.concatenate([self.epsilon - y, self.epsilon + y])
        diag = np.concatenate([np.diag(K), np.diag(K)])
        a = np.zeros(2 * l)
        G = p.copy()

        def q_row(i):
            k = K[i % l]
            return s[i] * s * np.concatenate([k, k])

        flag = "not_converged"
        it = 0
        for it in range(self.max_iter):
            mg = -s * G
            up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
            low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
            if not up.any() or not low.any():
                flag = "ok"
                break
            i = int(np.flatnonzero(up)[np.argmax(mg[up])])
            g_max = mg[i]
            g_min = mg[low].min()
            if g_max - g_min < self.tol:
                flag = "ok"
                break
            Qi = q_row(i)
            cand = low & (mg < g_max)
            b = g_max - mg[cand]
            quad = diag[i] + diag[cand] - 2.0 * s[i] * s[cand] * Qi[cand]
            quad = np.where(quad > 0, quad, TAU)
            j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / quad)])
            Qj = q_row(j)
            ai, aj = a[i], a[j]
            self._update_pair(a, G, i, j, Qi, Qj, s, diag, C)
            G += Qi * (a[i] - ai) + Qj * (a[j] - aj)
        else:
            warnings.warn(f"SMO hit max_iter={self.max_iter} before meeting tol", ConvergenceWarning,
                          stacklevel=3)
        self.convergence_ = {"iters": it, "flag": flag}

        beta = a[:l] - a[l:]
        self.dual_objective_ = float(0.5 * a @ (G + p))
        self.intercept_ = -self._rho(a, G, s, C)
        sv = np.flatnonzero(beta != 0.0)
        self.support_ = sv
        self.support_vectors_ = X[sv].copy()
        self.dual_coef_ = beta[sv].copy()

    @staticmethod
    def _update_pair(a, G, i, j, Qi, Qj, s, diag, C):
        # two-variable analytic step with box clipping, as in LIBSVM
        Qij = Qi[j]
        if s[i] != s[j]:
            quad = max(diag[i] + diag[j] + 2.0 * Qij, TAU)
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * Qij, TAU)
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total

    @staticmethod
    def _rho(a, G, s, C):
        yG = s * G
        at_upper = a >= C
        at_lower = a <= 0
        free = ~(at_upper | at_lower)
        if free.any():
            return float(yG[free].mean())
        ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
        lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        return float(0.5 * (ub + lb))

    def _predict(self, X):
        if len(self.dual_coef_) == 0:
            return np.full(len(X), self.intercept_)
        return self._kernel(X, self.support_vectors_) @ self.dual_coef_ + self.intercept_

    def _state(self):
        return {"gamma_value": self.gamma_, "intercept": self.intercept_,
                "support": self.support_.tolist(),
                "support_vectors": self.support_vectors_.tolist(),
                "dual_coef": self.dual_coef_.tolist(), "dual_objective": self.dual_objective_}

    def _load_state(self, d):
        self.gamma_ = d["gamma_value"]
        self.intercept_ = d["intercept"]
        self.support_ = np.array(d["support"], dtype=np.intp)
        self.support_vectors_ = np.array(d["support_vectors"], dtype=np.float64).reshape(
            len(self.support_), self.n_features_)
        self.dual_coef_ = np.array(d["dual_coef"], dtype=np.float64)
        self.dual_objective_ = d["dual_objective"]


def fit_svr(X, y, C=1.0, epsilon=0.1, kernel="rbf", tol=1e-3, max_iter=100_000, **kernel_params):
    return SVR(C, epsilon, kernel, tol=tol, max_iter=max_iter, **kernel_params).fit(X, y)


def predict_svr(model: SVR, X):
    return model.predict(X)
