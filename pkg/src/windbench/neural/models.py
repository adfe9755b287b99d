"""Fit/predict wrappers for the MLP, 1-D CNN and LSTM stacks."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..base import Regressor
from .stack import (EpochTrace, TrainConfig, build_cnn1d, build_lstm, build_mlp, dump_manifest,
                    load_stack, save_stack, train)

ARCH_DEFAULTS = {
    "mlp": {"hidden_layers": 13, "width": 32, "activation": "relu", "init": "he"},
    "cnn1d": {"filters": 64, "kernel_size": 2, "pool": 2, "dense_width": 50, "init": "he"},
    "lstm": {"hidden": 50, "lookback": 1, "init": "normal", "forget_bias": 1.0},
}


def sliding_windows(X, lookback):
    """(n, d) -> (n, lookback, d); row t holds rows t-lookback+1..t, with the
    first row repeated where history runs out."""
    n = len(X)
    idx = np.arange(n)[:, None] + np.arange(-lookback + 1, 1)[None, :]
    return X[np.clip(idx, 0, n - 1)]


class NeuralRegressor(Regressor):
    """Trains on a standardized target and maps predictions back.

    ``kind`` picks the architecture; remaining keyword arguments are
    architecture settings (see ``ARCH_DEFAULTS``) or TrainConfig fields.
    """

    model_type = "neural"

    def __init__(self, kind="lstm", scale_target=True, **kwargs):
        super().__init__()
        if kind not in ARCH_DEFAULTS:
            raise ValueError(f"unknown network kind {kind!r}")
        self.kind = kind
        self.scale_target = scale_target
        self.arch = dict(ARCH_DEFAULTS[kind])
        train_fields = TrainConfig.__dataclass_fields__
        train_kw = {}
        for key, value in kwargs.items():
            if key in self.arch:
                self.arch[key] = value
            elif key in train_fields:
                train_kw[key] = value
            else:
                raise TypeError(f"unexpected parameter {key!r} for {kind}")
        self.train_config = TrainConfig(**train_kw)
        self.trace_ = None
        self.log = None

    def get_params(self):
        return {"kind": self.kind, "scale_target": self.scale_target, **self.arch,
                **self.train_config.to_dict()}

    def _build(self, d):
        a, seed = self.arch, self.train_config.seed
        if self.kind == "mlp":
            return build_mlp(d, a["hidden_layers"], a["width"], a["activation"], seed, a["init"])
        if self.kind == "cnn1d":
            return build_cnn1d(d, a["filters"], a["kernel_size"], a["pool"], a["dense_width"],
                               seed, a["init"])
        return build_lstm(d, a["hidden"], seed, a["init"], a["forget_bias"])

    def _inputs(self, X):
        if self.kind != "lstm":
            return X
        return sliding_windows(X, int(self.arch["lookback"]))

    def _fit(self, X, y):
        if self.scale_target:
            self.y_mean_, self.y_std_ = float(y.mean()), float(y.std()) or 1.0
        else:
            self.y_mean_, self.y_std_ = 0.0, 1.0
        self.stack_ = self._build(X.shape[1])
        _, self.trace_ = train(self.stack_, self._inputs(X), (y - self.y_mean_) / self.y_std_,
                               self.train_config, log=self.log)
        self.convergence_ = {"iters": len(self.trace_), "flag": "ok"}

    def _predict(self, X):
        z = self.stack_.predict(self._inputs(X))[:, 0]
        return z * self.y_std_ + self.y_mean_

    def save(self, path):
        """Writes ``<stem>.json`` (manifest), ``<stem>.bin`` and, after
        training, ``<stem>_trace.csv``."""
        path = Path(path)
        manifest = save_stack(self.stack_, path.with_suffix(".bin"), {
            "model_type": self.model_type,
            "hyperparams": self.get_params(),
            "n_features": self.n_features_,
            "convergence": self.convergence_,
            "target_scale": {"mean": self.y_mean_, "std": self.y_std_},
            "params_file": path.with_suffix(".bin").name,
        })
        if self.trace_ is not None:
            trace_path = path.with_name(path.stem + "_trace.csv")
            self.trace_.to_csv(trace_path)
            manifest["trace_file"] = trace_path.name
        dump_manifest(path, manifest)

    @classmethod
    def load(cls, path):
        path = Path(path)
        manifest = json.loads(path.read_text(encoding="utf-8"))
        hp = dict(manifest["hyperparams"])
        model = cls(hp.pop("kind"), hp.pop("scale_target"), **hp)
        model.n_features_ = manifest["n_features"]
        model.convergence_ = manifest["convergence"]
        model.y_mean_ = manifest["target_scale"]["mean"]
        model.y_std_ = manifest["target_scale"]["std"]
        model.stack_ = load_stack(path.with_name(manifest["params_file"]), manifest)
        if "trace_file" in manifest:
            model.trace_ = EpochTrace.from_csv(path.with_name(manifest["trace_file"]))
        model.fitted_ = True
        return model
