"""Run configuration: the twelve-model roster, profiles and overrides."""

from __future__ import annotations

import copy
import hashlib
import inspect
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .base import MODEL_TYPES
from .errors import WindbenchError
from . import linear, svr, trees  # noqa: F401  (populate MODEL_TYPES)
from .neural import models as _neural  # noqa: F401


class ConfigError(WindbenchError):
    """Bad configuration or command-line usage."""


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    algorithm: str
    model_type: str
    fixed: dict = field(default_factory=dict)  # settings that define the model, not tunables

    def label(self, params: dict) -> str:
        shown = {k: params[k] for k in ("alpha",) if k in params}
        if not shown:
            return self.algorithm
        inner = ", ".join(f"{k}={v:g}" for k, v in shown.items())
        return f"{self.algorithm} ({inner})"


# Report order is roster order.
ROSTER = (
    ModelSpec("Model-1", "Multiple linear regression", "ols"),
    ModelSpec("Model-2", "Ridge regression", "ridge"),
    ModelSpec("Model-3", "Lasso regression", "lasso"),
    ModelSpec("Model-4", "Bayesian ridge regression", "bayesian_ridge"),
    ModelSpec("Model-5", "Huber regression", "huber"),
    ModelSpec("Model-6", "Bagging regression", "bagging"),
    ModelSpec("Model-7", "Random forest regression", "random_forest"),
    ModelSpec("Model-8", "AdaBoost.R2 regression", "adaboost_r2"),
    ModelSpec("Model-9", "Support vector regression (SVR)", "svr"),
    ModelSpec("Model-10", "MLP/DNN (13 hidden layers, relu)", "neural", {"kind": "mlp"}),
    ModelSpec("Model-11", "1-D CNN (64 filters, kernel 2, relu, max-pool 2)", "neural",
              {"kind": "cnn1d"}),
    ModelSpec("Model-12", "LSTM (normal init, linear output)", "neural", {"kind": "lstm"}),
)
MODEL_IDS = tuple(s.model_id for s in ROSTER)
_BY_ID = {s.model_id: s for s in ROSTER}


def spec_for(model_id: str) -> ModelSpec:
    return _BY_ID[model_id]


def resolve_models(selection) -> list[str]:
    """Accepts ids ("Model-7"), bare numbers ("7") or "all"; returns roster-ordered ids."""
    if selection is None:
        return list(MODEL_IDS)
    if isinstance(selection, str):
        selection = [s for s in selection.replace(" ", "").split(",") if s]
    if not selection:
        raise ConfigError("empty model list")
    chosen = set()
    for item in selection:
        item = str(item).strip()
        if item.lower() == "all":
            chosen.update(MODEL_IDS)
            continue
        key = f"Model-{item}" if item.isdigit() else item
        match = [m for m in MODEL_IDS if m.lower() == key.lower()]
        if not match:
            raise ConfigError(f"unknown model id {item!r} (expected Model-1 .. Model-12)")
        chosen.add(match[0])
    return [m for m in MODEL_IDS if m in chosen]


def default_params(model_id: str) -> dict:
    """Constructor defaults of the model class with the roster's fixed settings applied."""
    spec = spec_for(model_id)
    cls = MODEL_TYPES[spec.model_type]
    if spec.model_type == "neural":
        return cls(**spec.fixed).get_params()
    sig = inspect.signature(cls.__init__)
    return {k: p.default for k, p in sig.parameters.items()
            if k != "self" and p.default is not inspect.Parameter.empty}


def build_model(model_id: str, params: dict):
    spec = spec_for(model_id)
    cls = MODEL_TYPES[spec.model_type]
    try:
        return cls(**{**params, **spec.fixed})
    except TypeError as exc:
        raise ConfigError(f"{model_id}: {exc}") from None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k == "acceptance" or not (isinstance(v, dict) and isinstance(out.get(k), dict)):
            out[k] = copy.deepcopy(v)
        else:
            out[k] = _merge(out[k], v)
    return out


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("windbench") / "profiles" / name))


@dataclass
class RunConfig:
    profile: str
    data: dict
    split: dict
    seed: int
    standardize: bool
    models: dict[str, dict]  # complete hyperparameter block per model id
    acceptance: dict
    selected: list[str]

    @classmethod
    def from_profile(cls, profile: str = "synthetic", config_path=None) -> "RunConfig":
        path = Path(config_path) if config_path else bundled_path("profiles.json")
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            profiles = json.loads(path.read_text(encoding="utf-8"))["profiles"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid config file {path}: {exc}") from None
        if profile not in profiles:
            raise ConfigError(f"unknown profile {profile!r}; available: {', '.join(profiles)}")

        chain, name = [], profile
        while name is not None:
            if name in chain:
                raise ConfigError(f"profile inheritance loop at {name!r}")
            chain.append(name)
            name = profiles[name].get("extends")
        merged: dict = {}
        for name in reversed(chain):
            block = {k: v for k, v in profiles[name].items() if k != "extends"}
            merged = _merge(merged, block)

        data = dict(merged.get("data", {}))
        for key in ("csv", "mapping"):
            if data.get(key):
                p = Path(data[key])
                if not p.is_absolute():
                    p = path.parent / p
                data[key] = str(p)

        overrides = merged.get("models", {})
        unknown = set(overrides) - set(MODEL_IDS)
        if unknown:
            raise ConfigError(f"profile {profile!r} configures unknown models {sorted(unknown)}")
        models = {}
        for mid in MODEL_IDS:
            params = default_params(mid)
            extra = set(overrides.get(mid, {})) - set(params)
            if extra:
                raise ConfigError(f"{mid}: unknown hyperparameters {sorted(extra)}")
            params.update(overrides.get(mid, {}))
            models[mid] = params

        split = {"ratio": 0.8, "mode": "random", **merged.get("split", {})}
        cfg = cls(profile=profile, data=data, split=split, seed=int(merged.get("seed", 0)),
                  standardize=bool(merged.get("standardize", True)), models=models,
                  acceptance=dict(merged.get("acceptance", {})), selected=list(MODEL_IDS))
        cfg.set_seed(cfg.seed)
        return cfg

    def set_seed(self, seed: int):
        """The run seed drives the split and every seeded model."""
        self.seed = int(seed)
        self.split["seed"] = self.seed
        for params in self.models.values():
            if "seed" in params:
                params["seed"] = self.seed

    def to_dict(self) -> dict:
        return {"profile": self.profile, "data": self.data, "split": self.split,
                "seed": self.seed, "standardize": self.standardize, "models": self.models,
                "acceptance": self.acceptance, "selected": self.selected}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
