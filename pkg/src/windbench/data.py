"""Meteorological CSV ingestion: parse, hourly aggregation, dataset assembly,
train/test split and feature standardization.

Tables are held column-wise as float64 arrays with NaN marking a missing
cell; timestamps are ``datetime64[s]``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateSplit,
    EmptyFile,
    EmptyInput,
    MalformedTimestamp,
    MissingColumn,
    NoCompleteRows,
)

TARGET_NAME = "wind_speed_80m"

# The 17 predictors, in the order the NREL M2 station lists them.
CANONICAL_FEATURES = (
    "global_psp",
    "temperature_2m",
    "sea_level_pressure",
    "wind_speed_2m",
    "wind_direction_2m",
    "wind_shear",
    "turbulence_intensity_2m",
    "friction_velocity",
    "wind_chill_temperature",
    "dew_point_temperature",
    "relative_humidity",
    "specific_humidity",
    "station_pressure",
    "wind_speed_5m",
    "accumulated_precipitation",
    "electric_field",
    "surface_roughness",
)

AGGREGATIONS = ("mean", "circular_mean", "sum")


@dataclass(frozen=True)
class ColumnMapping:
    """Source-column to canonical-name mapping plus per-column aggregation.

    ``features`` maps canonical name -> source column; its order is the
    column order of the resulting design matrix. ``aggregation`` is keyed
    by source column and defaults to ``"mean"``.
    """

    target: str
    features: dict[str, str]
    timestamp_column: str | tuple[str, ...]
    timestamp_format: str
    aggregation: dict[str, str] = field(default_factory=dict)
    missing_values: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.features:
            raise DataError("mapping must name at least one feature")
        sources = list(self.features.values())
        if self.target in sources:
            raise DataError(f"target column {self.target!r} is also mapped as a feature")
        if len(set(sources)) != len(sources):
            raise DataError("a source column is mapped to more than one feature")
        for col, rule in self.aggregation.items():
            if rule not in AGGREGATIONS:
                raise DataError(f"unknown aggregation {rule!r} for column {col!r}")

    @property
    def timestamp_columns(self) -> tuple[str, ...]:
        if isinstance(self.timestamp_column, str):
            return (self.timestamp_column,)
        return tuple(self.timestamp_column)

    @property
    def value_columns(self) -> list[str]:
        return [self.target, *self.features.values()]

    def rule(self, column: str) -> str:
        return self.aggregation.get(column, "mean")

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        ts = d["timestamp"]
        col = ts["column"]
        return cls(
            target=d["target"],
            features=dict(d["features"]),
            timestamp_column=col if isinstance(col, str) else tuple(col),
            timestamp_format=ts["format"],
            aggregation=dict(d.get("aggregation", {})),
            missing_values=tuple(str(v) for v in d.get("missing_values", ())),
        )

    def to_dict(self) -> dict:
        col = self.timestamp_column
        return {
            "target": self.target,
            "features": dict(self.features),
            "aggregation": dict(self.aggregation),
            "timestamp": {"column": col if isinstance(col, str) else list(col),
                          "format": self.timestamp_format},
            "missing_values": list(self.missing_values),
        }

    @classmethod
    def load(cls, path) -> "ColumnMapping":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"mapping file not found: {path}")
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
            return cls.from_dict(d)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"invalid mapping file {path}: {exc}") from exc


@dataclass
class RawTable:
    timestamps: np.ndarray  # datetime64[s], strictly increasing
    columns: dict[str, np.ndarray]

    def __len__(self):
        return len(self.timestamps)

    def records(self):
        """Yield rows as dicts; missing cells come back as ``None``."""
        names = list(self.columns)
        for i, ts in enumerate(self.timestamps):
            rec = {"timestamp": ts}
            for name in names:
                v = self.columns[name][i]
                rec[name] = None if math.isnan(v) else float(v)
            yield rec


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    target_name: str = TARGET_NAME
    timestamps: np.ndarray | None = None
    index: np.ndarray | None = None  # row positions in the parent dataset
    n_dropped: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.ndim != 1 or len(self.X) != len(self.y):
            raise DataError(f"X {self.X.shape} and y {self.y.shape} are not row-aligned")
        if self.X.shape[1] != len(self.feature_names):
            raise DataError("feature_names does not match the number of columns")
        if self.index is None:
            self.index = np.arange(len(self.y))

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return replace(
            self,
            X=self.X[rows],
            y=self.y[rows],
            timestamps=None if self.timestamps is None else self.timestamps[rows],
            index=self.index[rows],
            n_dropped=0,
        )


def _parse_float(cell: str, missing: frozenset) -> float:
    cell = cell.strip()
    if not cell or cell in missing:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        return math.nan


def parse_csv(path, mapping: ColumnMapping) -> RawTable:
    path = Path(path)
    missing = frozenset(mapping.missing_values)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or not any(h.strip() for h in header):
            raise EmptyFile(f"{path} has no header row")
        header = [h.strip() for h in header]
        pos = {name: i for i, name in enumerate(header)}
        for name in (*mapping.timestamp_columns, *mapping.value_columns):
            if name not in pos:
                raise MissingColumn(name)
        ts_idx = [pos[c] for c in mapping.timestamp_columns]
        val_idx = [pos[c] for c in mapping.value_columns]

        stamps = []
        values = []
        for rownum, row in enumerate(reader, start=1):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            text = " ".join(row[i].strip() for i in ts_idx)
            try:
                stamps.append(datetime.strptime(text, mapping.timestamp_format))
            except ValueError:
                raise MalformedTimestamp(rownum, text) from None
            values.append([_parse_float(row[i], missing) for i in val_idx])

    if not stamps:
        raise EmptyFile(f"{path} has no data rows")

    ts = np.array(stamps, dtype="datetime64[s]")
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    dup = np.flatnonzero(ts[1:] == ts[:-1])
    if dup.size:
        raise MalformedTimestamp(int(order[dup[0] + 1]) + 1, str(ts[dup[0] + 1]))
    table = np.array(values, dtype=np.float64)[order]
    cols = {name: table[:, j].copy() for j, name in enumerate(mapping.value_columns)}
    return RawTable(ts, cols)


def circular_mean_deg(angles) -> float:
    """Vector mean of compass directions in degrees, in [0, 360)."""
    a = np.radians(np.asarray(angles, dtype=np.float64))
    return _wrap360(math.degrees(math.atan2(np.sin(a).mean(), np.cos(a).mean())))


def _wrap360(deg):
    out = np.mod(deg, 360.0)
    # -tiny % 360 rounds to 360.0
    return np.where(out >= 360.0, 0.0, out)


def aggregate_hourly(raw: RawTable, mapping: ColumnMapping) -> RawTable:
    if len(raw) == 0:
        raise EmptyInput("no rows to aggregate")
    hours, inv = np.unique(raw.timestamps.astype("datetime64[h]"), return_inverse=True)
    inv = inv.ravel()
    m = len(hours)
    out = {}
    for name, v in raw.columns.items():
        ok = ~np.isnan(v)
        cnt = np.bincount(inv, weights=ok.astype(np.float64), minlength=m)
        rule = mapping.rule(name)
        with np.errstate(invalid="ignore", divide="ignore"):
            if rule == "circular_mean":
                rad = np.radians(np.where(ok, v, 0.0))
                s = np.bincount(inv, weights=np.where(ok, np.sin(rad), 0.0), minlength=m)
                c = np.bincount(inv, weights=np.where(ok, np.cos(rad), 0.0), minlength=m)
                agg = _wrap360(np.degrees(np.arctan2(s, c)))
            else:
                total = np.bincount(inv, weights=np.where(ok, v, 0.0), minlength=m)
                agg = total if rule == "sum" else total / cnt
        out[name] = np.where(cnt > 0, agg, np.nan)
    return RawTable(hours.astype("datetime64[s]"), out)


def build_dataset(hourly: RawTable, mapping: ColumnMapping) -> Dataset:
    missing = [c for c in mapping.value_columns if c not in hourly.columns]
    if missing:
        raise MissingColumn(missing[0])
    X = np.column_stack([hourly.columns[src] for src in mapping.features.values()])
    y = hourly.columns[mapping.target]
    complete = ~(np.isnan(X).any(axis=1) | np.isnan(y))
    if not complete.any():
        raise NoCompleteRows("every hourly row has at least one missing cell")
    return Dataset(
        X=X[complete],
        y=y[complete],
        feature_names=list(mapping.features),
        timestamps=hourly.timestamps[complete],
        n_dropped=int((~complete).sum()),
    )


def n_train_for(n: int, ratio: float) -> int:
    # round half up; Python's round() is banker's rounding
    return int(math.floor(ratio * n + 0.5))


def split(ds: Dataset, ratio: float = 0.8, seed: int = 0, mode: str = "random"):
    """Partition ``ds`` into (train, test).

    Random mode shuffles with a seeded permutation and takes the prefix;
    chronological mode keeps row order, so the test set is the latest hours.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    n = ds.n
    k = n_train_for(n, ratio)
    if k == 0 or k == n:
        raise DegenerateSplit(f"ratio {ratio} on {n} rows leaves an empty side")
    if mode == "random":
        perm = np.random.default_rng(seed).permutation(n)
    elif mode == "chronological":
        perm = np.arange(n)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return ds.take(perm[:k]), ds.take(perm[k:])


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask of columns whose std was forced to 1

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        if len(X) < 2:
            raise DataError("need at least two training rows to standardize")
        mean = X.mean(axis=0)
        std = X.std(axis=0)  # population convention
        constant = std == 0.0
        return cls(mean, np.where(constant, 1.0, std), constant)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def apply(self, ds: Dataset) -> Dataset:
        return replace(ds, X=self.transform(ds.X))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64),
                   np.array(d["constant"], dtype=bool))


def fit_standardizer(train: Dataset) -> Standardizer:
    return Standardizer.fit(train.X)


# persistence of prepared artifacts

def write_dataset_csv(path, ds: Dataset):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "row", *ds.feature_names, ds.target_name])
        for i in range(ds.n):
            ts = "" if ds.timestamps is None else str(ds.timestamps[i])
            w.writerow([ts, int(ds.index[i]), *map(repr, ds.X[i].tolist()), repr(float(ds.y[i]))])


def read_dataset_csv(path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"prepared dataset not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["timestamp", "row"] or len(header) < 4:
            raise DataError(f"{path} is not a prepared dataset CSV")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path} holds no rows")
    stamps = [r[0] for r in rows]
    ts = None if not all(stamps) else np.array(stamps, dtype="datetime64[s]")
    body = np.array([[float(c) for c in r[2:]] for r in rows], dtype=np.float64)
    return Dataset(
        X=body[:, :-1],
        y=body[:, -1],
        feature_names=header[2:-1],
        target_name=header[-1],
        timestamps=ts,
        index=np.array([int(r[1]) for r in rows], dtype=np.intp),
    )
