"""Regression accuracy measures: MAE, MSE, MedAE and R^2."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyMetricInput, LengthMismatch, ZeroVariance


def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{y.size} actual values vs {y_hat.size} predictions")
    if y.size == 0:
        raise EmptyMetricInput("metrics need at least one sample")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def medae(y, y_hat) -> float:
    # even n: midpoint of the two middle order statistics
    y, y_hat = _pair(y, y_hat)
    return float(np.median(np.abs(y - y_hat)))


def r2(y, y_hat) -> float:
    """Coefficient of determination, centred on the mean of the *actual* values."""
    y, y_hat = _pair(y, y_hat)
    if y.size < 2:
        raise ZeroVariance("R^2 needs at least two samples")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0.0:
        raise ZeroVariance("R^2 is undefined when the actual values are constant")
    return float(1.0 - np.sum((y - y_hat) ** 2) / ss_tot)


@dataclass
class MetricsReport:
    model: str
    split: str
    n: int
    mae: float
    mse: float
    medae: float
    r2: float | None  # None when the actual values have zero variance

    def to_dict(self):
        return asdict(self)


def evaluate(y, y_hat, model: str = "", split: str = "test") -> MetricsReport:
    y, y_hat = _pair(y, y_hat)
    try:
        score = r2(y, y_hat)
    except ZeroVariance:
        score = None
    return MetricsReport(model, split, int(y.size), mae(y, y_hat), mse(y, y_hat),
                         medae(y, y_hat), score)
