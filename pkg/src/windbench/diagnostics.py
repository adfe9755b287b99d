"""Diagnostic plot series: residuals, actual-vs-predicted Q-Q, chi-square Q-Q
of the feature matrix, and per-epoch training curves.

Series are plain point lists so they can be dumped to CSV and rendered to
SVG independently.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erfinv, gammainc

from .errors import LengthMismatch, SingularCovariance

KINDS = ("qq_pred", "residual", "chi2_qq", "epoch_loss")


@dataclass
class PlotSeries:
    kind: str
    points: np.ndarray  # (n, 2)
    reference: dict = field(default_factory=dict)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.isfinite(self.points).all():
            raise ValueError(f"{self.kind} series contains non-finite points")


def _aligned(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{y.size} actual values vs {y_hat.size} predictions")
    return y, y_hat


def residual_series(y, y_hat, title="") -> PlotSeries:
    """Residual y - y_hat against the fitted value."""
    y, y_hat = _aligned(y, y_hat)
    return PlotSeries("residual", np.column_stack([y_hat, y - y_hat]),
                      {"type": "hline", "y": 0.0}, title, "predicted", "residual")


def pred_qq_series(y, y_hat, title="") -> PlotSeries:
    y, y_hat = _aligned(y, y_hat)
    order = np.lexsort((y_hat, y))
    return PlotSeries("qq_pred", np.column_stack([y[order], y_hat[order]]),
                      {"type": "line", "slope": 1.0, "intercept": 0.0}, title,
                      "actual", "predicted")


def chi2_ppf(p, df, tol=1e-10) -> np.ndarray:
    """Chi-square quantiles.

    Wilson-Hilferty gives the starting bracket; bisection on the regularized
    lower incomplete gamma then narrows it to ``tol`` relative to the quantile
    (the cdf near zero grows like x**(df/2), so an absolute stop is too coarse).
    """
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    k = df / 2.0
    # Wilson-Hilferty: chi2 ~ df * (1 - 2/(9df) + z*sqrt(2/(9df)))^3
    z = np.sqrt(2.0) * erfinv(2.0 * p - 1.0)
    c = 2.0 / (9.0 * df)
    guess = np.maximum(df * (1.0 - c + z * np.sqrt(c)) ** 3, 0.0)
    lo = np.zeros_like(p)
    hi = np.maximum(2.0 * guess, 1.0)
    while True:
        short = gammainc(k, hi / 2.0) < p
        if not short.any():
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, 2.0 * hi, hi)
    # tighten the lower end with the guess where it is already below target
    below = gammainc(k, guess / 2.0) < p
    lo = np.where(below, np.maximum(lo, guess), lo)
    hi = np.where(below, hi, np.minimum(hi, guess))
    while np.any(hi - lo > tol * hi):
        mid = 0.5 * (lo + hi)
        under = gammainc(k, mid / 2.0) < p
        lo = np.where(under, mid, lo)
        hi = np.where(under, hi, mid)
        if np.all(hi - lo <= 4 * np.spacing(hi)):
            break
    return 0.5 * (lo + hi)


def mahalanobis_sq(X) -> tuple[np.ndarray, list]:
    """Squared Mahalanobis distances to the sample mean (sample covariance, 1/(n-1)).

    With this convention the distances average exactly d(n-1)/n.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    flags = []
    centred = X - X.mean(axis=0)
    S = centred.T @ centred / (n - 1)
    scale = np.trace(S) / d
    try:
        L = np.linalg.cholesky(S)
        # rounding can leave an exactly dependent column with a tiny positive pivot
        if np.min(np.diag(L)) ** 2 <= 1e-12 * scale:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        ridge = 1e-8 * scale
        flags.append(f"covariance regularized by {ridge:.3g} * I")
        try:
            L = np.linalg.cholesky(S + ridge * np.eye(d))
        except np.linalg.LinAlgError:
            raise SingularCovariance("sample covariance is singular even after regularization") from None
    W = np.linalg.solve(L, centred.T)
    return np.sum(W * W, axis=0), flags


def chi2_qq_series(X, title="") -> PlotSeries:
    """Sorted squared Mahalanobis distances against chi-square(d) quantiles."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    n, d = X.shape
    if n <= d:
        raise ValueError(f"chi-square Q-Q needs more rows than columns, got {n}x{d}")
    d2, flags = mahalanobis_sq(X)
    if n == d + 1:
        msg = "n = d + 1: every Mahalanobis distance is identical, the Q-Q plot is uninformative"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        flags.append(msg)
    q = chi2_ppf((np.arange(1, n + 1) - 0.5) / n, d)
    s = PlotSeries("chi2_qq", np.column_stack([q, np.sort(d2)]),
                   {"type": "line", "slope": 1.0, "intercept": 0.0}, title,
                   f"chi-square({d}) quantile", "squared Mahalanobis distance")
    s.flags = flags
    return s


def epoch_series(values, label: str, title="") -> PlotSeries:
    values = np.asarray(values, dtype=np.float64)
    return PlotSeries("epoch_loss", np.column_stack([np.arange(1, len(values) + 1), values]),
                      {}, title, "epoch", label)


def pearson(series: PlotSeries) -> float:
    x, y = series.points.T
    return float(np.corrcoef(x, y)[0, 1])


def write_series_csv(path, series: PlotSeries):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([series.xlabel or "x", series.ylabel or "y"])
        for x, y in series.points.tolist():
            w.writerow([repr(x), repr(y)])


def render_svg(path, *panels: PlotSeries, title: str = ""):
    """Render one or more series, stacked vertically, into a standalone SVG.

    Output is byte-stable across runs: no date metadata, fixed id salt.
    """
    import matplotlib
    from matplotlib.figure import Figure

    with matplotlib.rc_context({"svg.hashsalt": "windbench", "svg.fonttype": "none"}):
        fig = Figure(figsize=(5.0, 3.6 * len(panels)))
        axes = fig.subplots(len(panels), 1, squeeze=False)[:, 0]
        for ax, s in zip(axes, panels):
            x, y = s.points.T
            if s.kind == "epoch_loss":
                ax.plot(x, y, lw=1.0)
                if len(y) and np.all(y > 0):
                    ax.set_yscale("log")
            else:
                ax.scatter(x, y, s=6, alpha=0.6, linewidths=0)
                _reference(ax, s, x, y)
            ax.set_xlabel(s.xlabel)
            ax.set_ylabel(s.ylabel)
            if s.title:
                ax.set_title(s.title, fontsize=9)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})


def _reference(ax, s, x, y):
    ref = s.reference
    if ref.get("type") == "hline":
        ax.axhline(ref["y"], color="k", lw=0.8)
    elif ref.get("type") == "line" and len(x):
        lo = min(x.min(), y.min())
        hi = max(x.max(), y.max())
        if math.isclose(lo, hi):
            hi = lo + 1.0
        ax.plot([lo, hi], [ref["intercept"] + ref["slope"] * lo, ref["intercept"] + ref["slope"] * hi],
                color="k", lw=0.8)
