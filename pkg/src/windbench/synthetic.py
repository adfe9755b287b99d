"""Seeded synthetic stand-in for the met-tower extract.

Features are 17 standardized columns driven by a few shared latent factors
(met variables co-vary through weather regimes). The target is a smooth
nonlinear function of five of them plus Gaussian noise whose std is 0.1 of
the signal's std. ``write_minute_csv`` spreads each hourly sample over
minute rows with zero-sum jitter, so hourly mean aggregation recovers the
hourly values.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import CANONICAL_FEATURES, TARGET_NAME, ColumnMapping

N_DAYS = 92
START = np.datetime64("2018-05-01T00:00")
TIMESTAMP_COLUMN = "timestamp"
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"
N_FACTORS = 4
IDIO_NOISE = 0.5
NOISE_FRACTION = 0.1
# feature columns the target depends on
SIGNAL_FEATURES = (0, 1, 3, 5, 13)


def signal(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (1.6 * X[:, 3] + np.sin(1.5 * X[:, 0]) + 0.8 * np.tanh(X[:, 1])
            + 0.4 * X[:, 13] ** 2 + 0.5 * X[:, 5] * X[:, 13])


def make_hourly(n_hours: int = N_DAYS * 24, seed: int = 0):
    """Return (X, y, signal) at hourly resolution."""
    rng = np.random.default_rng(seed)
    d = len(CANONICAL_FEATURES)
    loadings = rng.normal(size=(d, N_FACTORS))
    X = rng.normal(size=(n_hours, N_FACTORS)) @ loadings.T + IDIO_NOISE * rng.normal(size=(n_hours, d))
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    s = signal(X)
    s = 7.0 + 1.8 * (s - s.mean()) / s.std()
    y = s + NOISE_FRACTION * s.std() * rng.normal(size=n_hours)
    return X, y, s


def mapping() -> ColumnMapping:
    return ColumnMapping(
        target=TARGET_NAME,
        features={name: name for name in CANONICAL_FEATURES},
        timestamp_column=TIMESTAMP_COLUMN,
        timestamp_format=TIMESTAMP_FORMAT,
        aggregation={name: "mean" for name in (TARGET_NAME, *CANONICAL_FEATURES)},
    )


def write_minute_csv(path, seed: int = 0, minutes_per_hour: int = 60, n_days: int = N_DAYS,
                     jitter: float = 0.05) -> int:
    """Write the minute-level CSV; returns the number of data rows."""
    if not 1 <= minutes_per_hour <= 60:
        raise ValueError("minutes_per_hour must be in [1, 60]")
    n_hours = n_days * 24
    X, y, _ = make_hourly(n_hours, seed)
    hourly = np.column_stack([X, y])
    m = minutes_per_hour
    rng = np.random.default_rng([seed, 1])
    noise = rng.normal(scale=jitter, size=(n_hours, m, hourly.shape[1]))
    noise -= noise.mean(axis=1, keepdims=True)
    minute = (hourly[:, None, :] + noise).reshape(n_hours * m, -1)

    # spread the m rows evenly over the hour
    offsets = (np.arange(m) * 60) // m
    stamps = (START + np.arange(n_hours)[:, None] * 60 + offsets[None, :]).ravel()
    text = np.char.replace(np.datetime_as_string(stamps, unit="m"), "T", " ")

    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([TIMESTAMP_COLUMN, *CANONICAL_FEATURES, TARGET_NAME])
        for ts, row in zip(text.tolist(), minute.tolist()):
            w.writerow([ts, *map(repr, row)])
    return len(minute)


def write_bundle(out_dir, seed: int = 0, minutes_per_hour: int = 60, n_days: int = N_DAYS):
    """Write ``synthetic_minutes.csv`` and ``synthetic_mapping.json``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "synthetic_minutes.csv"
    map_path = out / "synthetic_mapping.json"
    write_minute_csv(csv_path, seed, minutes_per_hour, n_days)
    map_path.write_text(json.dumps(mapping().to_dict(), indent=1) + "\n", encoding="utf-8")
    return csv_path, map_path
