"""Linear regressors: OLS, ridge, lasso (coordinate descent), Bayesian ridge
(evidence maximization) and Huber (IRLS with a jointly estimated scale).

All of them centre X and y internally so the intercept is never penalized.
"""

from __future__ import annotations

import warnings

import numpy as np

from .base import Regressor
from .errors import ConvergenceWarning


class LinearModel(Regressor):
    def __init__(self):
        super().__init__()
        self.coef_ = None
        self.intercept_ = 0.0

    def get_params(self):
        return {}

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_

    def _state(self):
        return {"coef": self.coef_.tolist(), "intercept": float(self.intercept_)}

    def _load_state(self, d):
        self.coef_ = np.array(d["coef"], dtype=np.float64)
        self.intercept_ = float(d["intercept"])

    def _set(self, w, x_mean, y_mean):
        self.coef_ = np.asarray(w, dtype=np.float64)
        self.intercept_ = float(y_mean - x_mean @ self.coef_)


def _centre(X, y):
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    return X - x_mean, y - y_mean, x_mean, y_mean


class LinearRegression(LinearModel):
    """Ordinary least squares. Rank-deficient designs fall back to the
    minimum-norm solution and set ``convergence_['flag'] = 'rank_deficient'``."""

    model_type = "ols"

    def _fit(self, X, y):
        Xc, yc, xm, ym = _centre(X, y)
        w, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
        self.convergence_ = {"iters": 1, "flag": "ok" if rank == X.shape[1] else "rank_deficient"}
        self._set(w, xm, ym)


class Ridge(LinearModel):
    model_type = "ridge"

    def __init__(self, alpha=1.0):
        super().__init__()
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.alpha = float(alpha)

    def get_params(self):
        return {"alpha": self.alpha}

    def _fit(self, X, y):
        Xc, yc, xm, ym = _centre(X, y)
        A = Xc.T @ Xc + self.alpha * np.eye(X.shape[1])
        self.convergence_ = {"iters": 1, "flag": "ok"}
        try:
            w = np.linalg.solve(A, Xc.T @ yc)
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(Xc, yc, rcond=None)[0]
            self.convergence_ = {"iters": 1, "flag": "rank_deficient"}
        self._set(w, xm, ym)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


class Lasso(LinearModel):
    """Cyclic coordinate descent on (1/2n)||y - Xw - b||^2 + alpha * ||w||_1."""

    model_type = "lasso"

    def __init__(self, alpha=1.0, tol=1e-6, max_iter=10000):
        super().__init__()
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.alpha = float(alpha)
        self.tol = tol
        self.max_iter = max_iter

    def get_params(self):
        return {"alpha": self.alpha, "tol": self.tol, "max_iter": self.max_iter}

    def _fit(self, X, y):
        n, d = X.shape
        std = X.std(axis=0)
        if np.any((std < 0.1) | (std > 10.0)):
            warnings.warn("lasso features look unscaled; alpha is scale dependent",
                          UserWarning, stacklevel=3)
        Xc, yc, xm, ym = _centre(X, y)
        col_sq = np.einsum("ij,ij->j", Xc, Xc) / n
        w = np.zeros(d)
        r = yc.copy()
        flag = "not_converged"
        it = 0
        for it in range(1, self.max_iter + 1):
            max_step = 0.0
            for j in range(d):
                if col_sq[j] == 0.0:
                    continue
                xj = Xc[:, j]
                old = w[j]
                rho = xj @ r / n + col_sq[j] * old
                new = float(soft_threshold(rho, self.alpha)) / col_sq[j]
                if new != old:
                    r -= xj * (new - old)
                    w[j] = new
                    max_step = max(max_step, abs(new - old))
            if max_step < self.tol:
                flag = "ok"
                break
        if flag != "ok":
            warnings.warn(f"lasso did not converge in {self.max_iter} sweeps", ConvergenceWarning,
                          stacklevel=3)
        self.convergence_ = {"iters": it, "flag": flag}
        self._set(w, xm, ym)


def lasso_alpha_max(X, y) -> float:
    """Smallest alpha for which every lasso coefficient is zero."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.max(np.abs(X.T @ (y - y.mean()))) / len(y))


class BayesianRidge(LinearModel):
    """Evidence maximization for the Gaussian-prior linear model.

    Noise precision ``alpha_`` starts at 1/var(y) and weight precision
    ``lambda_`` at 1; both carry Gamma(1e-6, 1e-6) hyper-priors.
    """

    model_type = "bayesian_ridge"

    def __init__(self, max_iter=300, tol=1e-4, alpha_1=1e-6, alpha_2=1e-6,
                 lambda_1=1e-6, lambda_2=1e-6):
        super().__init__()
        self.max_iter = max_iter
        self.tol = tol
        self.alpha_1 = alpha_1
        self.alpha_2 = alpha_2
        self.lambda_1 = lambda_1
        self.lambda_2 = lambda_2

    def get_params(self):
        return {"max_iter": self.max_iter, "tol": self.tol, "alpha_1": self.alpha_1,
                "alpha_2": self.alpha_2, "lambda_1": self.lambda_1, "lambda_2": self.lambda_2}

    def _state(self):
        return {**super()._state(), "alpha": self.alpha_, "lambda": self.lambda_}

    def _load_state(self, d):
        super()._load_state(d)
        self.alpha_ = d["alpha"]
        self.lambda_ = d["lambda"]

    def _fit(self, X, y):
        n, d = X.shape
        Xc, yc, xm, ym = _centre(X, y)
        U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
        eig = s ** 2
        Uty = U.T @ yc

        def posterior_mean(alpha, lam):
            return Vt.T @ (s / (eig + lam / alpha) * Uty)

        alpha = 1.0 / (np.var(y) + np.finfo(np.float64).eps)
        lam = 1.0
        w_old = None
        flag = "not_converged"
        it = 0
        for it in range(1, self.max_iter + 1):
            w = posterior_mean(alpha, lam)
            rss = float(np.sum((yc - Xc @ w) ** 2))
            gamma = float(np.sum(alpha * eig / (lam + alpha * eig)))
            lam = (gamma + 2 * self.lambda_1) / (float(w @ w) + 2 * self.lambda_2)
            alpha = (n - gamma + 2 * self.alpha_1) / (rss + 2 * self.alpha_2)
            if w_old is not None and np.max(np.abs(w - w_old)) < self.tol:
                flag = "ok"
                break
            w_old = w
        if flag != "ok":
            warnings.warn("Bayesian ridge evidence iteration hit max_iter", ConvergenceWarning,
                          stacklevel=3)
        self.alpha_, self.lambda_ = float(alpha), float(lam)
        self.convergence_ = {"iters": it, "flag": flag}
        self._set(posterior_mean(alpha, lam), xm, ym)


class HuberRegressor(LinearModel):
    """Huber loss with concomitant scale, fitted by alternating IRLS.

    Minimizes  sum_i [sigma + sigma * H(r_i / sigma)] + alpha_reg * ||w||^2
    with H(z) = z^2 for |z| <= delta and 2 delta |z| - delta^2 beyond.
    Each sweep re-weights residuals for the current scale, solves the
    weighted ridge problem, then updates sigma from its stationarity
    condition.
    """

    model_type = "huber"

    def __init__(self, delta=1.35, alpha_reg=1e-4, tol=1e-6, max_iter=1000):
        super().__init__()
        if delta <= 0:
            raise ValueError("delta must be positive")
        if alpha_reg < 0:
            raise ValueError("alpha_reg must be non-negative")
        self.delta = float(delta)
        self.alpha_reg = float(alpha_reg)
        self.tol = tol
        self.max_iter = max_iter

    def get_params(self):
        return {"delta": self.delta, "alpha_reg": self.alpha_reg, "tol": self.tol,
                "max_iter": self.max_iter}

    def _state(self):
        return {**super()._state(), "scale": self.scale_}

    def _load_state(self, d):
        super()._load_state(d)
        self.scale_ = d["scale"]

    def _fit(self, X, y):
        n, d = X.shape
        A = np.column_stack([X, np.ones(n)])
        penalty = np.ones(d + 1)
        penalty[-1] = 0.0
        tiny = 1e-12 * (np.std(y) + np.abs(y).mean() + 1e-300)

        theta = np.linalg.lstsq(A, y, rcond=None)[0]
        r = y - A @ theta
        sigma = max(1.4826 * np.median(np.abs(r - np.median(r))), np.sqrt(np.mean(r ** 2)), tiny)
        flag = "not_converged"
        it = 0
        for it in range(1, self.max_iter + 1):
            abs_r = np.abs(r)
            out = abs_r > self.delta * sigma
            v = np.where(out, self.delta * sigma / np.maximum(abs_r, tiny), 1.0)
            G = A.T @ (A * v[:, None]) + np.diag(sigma * self.alpha_reg * penalty)
            theta_new = np.linalg.solve(G, A.T @ (v * y))
            r = y - A @ theta_new
            sigma_new = self._scale_step(r, sigma, tiny)
            step = max(np.max(np.abs(theta_new - theta)), abs(sigma_new - sigma))
            theta, sigma = theta_new, sigma_new
            if step < self.tol:
                flag = "ok"
                break
        if flag != "ok":
            warnings.warn("Huber IRLS hit max_iter", ConvergenceWarning, stacklevel=3)
        self.convergence_ = {"iters": it, "flag": flag}
        self.coef_ = theta[:d].copy()
        self.intercept_ = float(theta[d])
        self.scale_ = float(sigma)

    def _scale_step(self, r, sigma, tiny):
        # sigma^2 = sum_in r^2 / (n - delta^2 * n_out), sets taken at the current sigma
        out = np.abs(r) > self.delta * sigma
        denom = len(r) - self.delta ** 2 * out.sum()
        if denom <= 0:
            # objective still decreasing in sigma: grow until everything is inside
            return max(np.max(np.abs(r)) / self.delta, tiny)
        return max(np.sqrt(np.sum(r[~out] ** 2) / denom), tiny)


def fit_ols(X, y) -> LinearRegression:
    return LinearRegression().fit(X, y)


def fit_ridge(X, y, alpha) -> Ridge:
    return Ridge(alpha).fit(X, y)


def fit_lasso(X, y, alpha, tol=1e-6, max_iter=10000) -> Lasso:
    return Lasso(alpha, tol, max_iter).fit(X, y)


def fit_bayesian_ridge(X, y, max_iter=300, tol=1e-4) -> BayesianRidge:
    return BayesianRidge(max_iter, tol).fit(X, y)


def fit_huber(X, y, delta=1.35, alpha_reg=1e-4, tol=1e-6, max_iter=1000) -> HuberRegressor:
    return HuberRegressor(delta, alpha_reg, tol, max_iter).fit(X, y)
