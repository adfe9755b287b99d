"""Common fit/predict contract and JSON round-tripping for every model."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import NotFittedError, ShapeMismatch

MODEL_TYPES: dict[str, type] = {}


class Regressor:
    """Base class: subclasses implement ``_fit``, ``_predict`` and the
    ``_state``/``_load_state`` pair used for serialization."""

    model_type = ""

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.model_type:
            MODEL_TYPES[cls.model_type] = cls

    def __init__(self):
        self.fitted_ = False
        self.n_features_ = None
        self.convergence_ = {"iters": 0, "flag": "ok"}

    def get_params(self) -> dict:
        raise NotImplementedError

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if X.ndim != 2 or len(X) != len(y):
            raise ShapeMismatch(f"X {X.shape} and y {y.shape} are not row-aligned")
        self.n_features_ = X.shape[1]
        self._fit(X, y)
        self.fitted_ = True
        return self

    def predict(self, X) -> np.ndarray:
        if not self.fitted_:
            raise NotFittedError(f"{type(self).__name__} must be fitted before predict")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise ShapeMismatch(f"expected (m, {self.n_features_}) input, got {X.shape}")
        return self._predict(X)

    def to_dict(self) -> dict:
        if not self.fitted_:
            raise NotFittedError("cannot serialize an unfitted model")
        return {
            "model_type": self.model_type,
            "hyperparams": self.get_params(),
            "n_features": self.n_features_,
            "convergence": dict(self.convergence_),
            **self._state(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Regressor":
        klass = MODEL_TYPES[d["model_type"]] if cls is Regressor else cls
        model = klass(**d["hyperparams"])
        model.n_features_ = d["n_features"]
        model.convergence_ = dict(d.get("convergence", {"iters": 0, "flag": "ok"}))
        model._load_state(d)
        model.fitted_ = True
        return model

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> Regressor:
    """Load any serialized model; network manifests pull in their .bin file."""
    path = Path(path)
    d = json.loads(path.read_text(encoding="utf-8"))
    if d.get("model_type") == "neural":
        from .neural.models import NeuralRegressor
        return NeuralRegressor.load(path)
    return Regressor.from_dict(d)
