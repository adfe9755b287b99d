"""prepare -> train -> evaluate, plus the acceptance checks of a reproduce run.

Run directory layout::

    raw/       synthetic minute CSV + mapping (synthetic profile only)
    prepared/  hourly.csv, train.csv, test.csv, prepared.json
    models/    <model id>.json (+ .bin, _trace.csv for networks), train_status.json
    report/    report.md, report.csv, run_report.json, metrics/, plots/
"""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import synthetic
from .base import load_model
from .config import ConfigError, RunConfig, build_model, spec_for
from .data import (ColumnMapping, Standardizer, aggregate_hourly, build_dataset, parse_csv,
                   read_dataset_csv, split, write_dataset_csv)
from .errors import DataError, NotFittedError, WindbenchError
from .metrics import MetricsReport, evaluate as evaluate_metrics

log = logging.getLogger("windbench")

PREPARED, MODELS, REPORT = "prepared", "models", "report"
REPORT_COLUMNS = ("model", "algorithm", "mae", "mse", "medae", "r2", "n_test")


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", encoding="utf-8")


# prepare

def cmd_prepare(cfg: RunConfig, out_dir, csv_path=None, mapping_path=None) -> dict:
    """Raw CSV -> hourly dataset -> split -> standardized train/test files."""
    out = Path(out_dir)
    csv_path = csv_path or cfg.data.get("csv")
    mapping_path = mapping_path or cfg.data.get("mapping")
    if csv_path is None and cfg.data.get("synthetic"):
        syn = cfg.data["synthetic"]
        csv_path, mapping_path = synthetic.write_bundle(
            out / "raw", seed=syn.get("seed", 0),
            minutes_per_hour=syn.get("minutes_per_hour", 60),
            n_days=syn.get("n_days", synthetic.N_DAYS))
    if csv_path is None:
        raise ConfigError(f"profile {cfg.profile!r} needs a raw CSV (pass --data)")
    if mapping_path is None:
        raise ConfigError("no column mapping given (pass --mapping)")
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise DataError(f"raw CSV not found: {csv_path}")

    mapping = ColumnMapping.load(mapping_path)
    raw = parse_csv(csv_path, mapping)
    hourly = aggregate_hourly(raw, mapping)
    ds = build_dataset(hourly, mapping)
    train, test = split(ds, cfg.split["ratio"], cfg.split["seed"], cfg.split["mode"])
    if cfg.standardize:
        std = Standardizer.fit(train.X)
    else:
        d = ds.d
        std = Standardizer(np.zeros(d), np.ones(d), np.zeros(d, dtype=bool))
    train, test = std.apply(train), std.apply(test)

    pdir = out / PREPARED
    pdir.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(pdir / "hourly.csv", ds)
    write_dataset_csv(pdir / "train.csv", train)
    write_dataset_csv(pdir / "test.csv", test)
    constant = [n for n, c in zip(ds.feature_names, std.constant) if c]
    sidecar = {
        "source_csv": csv_path.name,
        "mapping": mapping.to_dict(),
        "n_raw_rows": len(raw),
        "n_hours": len(hourly),
        "n_dropped": ds.n_dropped,
        "n": ds.n,
        "n_train": train.n,
        "n_test": test.n,
        "split": dict(cfg.split),
        "standardized": cfg.standardize,
        "standardizer": std.to_dict(),
        "constant_columns": constant,
        "feature_names": ds.feature_names,
        "target": ds.target_name,
        "train_rows": train.index.tolist(),
        "test_rows": test.index.tolist(),
    }
    _write_json(pdir / "prepared.json", sidecar)
    log.info("prepared %d hourly rows (%d dropped): %d train / %d test",
             ds.n, ds.n_dropped, train.n, test.n)
    return sidecar


# train

def _train_one(model_id: str, params: dict, train_path: str, models_dir: str) -> dict:
    """Fit one model on the training file and save it. Runs in a worker
    process when --jobs > 1, so it only takes plain arguments."""
    t0 = time.perf_counter()
    status = {"model": model_id, "status": "ok", "message": "", "seconds": 0.0,
              "convergence": None, "warnings": []}
    try:
        train = read_dataset_csv(train_path)
        model = build_model(model_id, params)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model.fit(train.X, train.y)
        status["warnings"] = sorted({str(w.message) for w in caught})
        model.save(Path(models_dir) / f"{model_id}.json")
        status["convergence"] = dict(model.convergence_)
    except (WindbenchError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        status["status"] = "failed"
        status["message"] = f"{type(exc).__name__}: {exc}"
        # a model file left over from an earlier run must not be evaluated
        Path(models_dir, f"{model_id}.json").unlink(missing_ok=True)
    status["seconds"] = time.perf_counter() - t0
    return status


def cmd_train(cfg: RunConfig, out_dir, models=None, jobs: int = 1) -> dict[str, dict]:
    """Fit the selected models. Only ``prepared/train.csv`` is read here."""
    out = Path(out_dir)
    train_path = out / PREPARED / "train.csv"
    if not train_path.is_file():
        raise DataError(f"no prepared training data at {train_path}; run prepare first")
    mdir = out / MODELS
    mdir.mkdir(parents=True, exist_ok=True)
    ids = list(models if models is not None else cfg.selected)
    if not ids:
        raise ConfigError("empty model list")

    args = [(mid, cfg.models[mid], str(train_path), str(mdir)) for mid in ids]
    if jobs > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_one, *zip(*args)))
    else:
        results = []
        for a in args:
            log.info("training %s", a[0])
            results.append(_train_one(*a))
    statuses = {r["model"]: r for r in results}
    for r in results:
        if r["status"] != "ok":
            log.warning("%s failed: %s", r["model"], r["message"])
        else:
            log.info("%s trained in %.1f s", r["model"], r["seconds"])

    status_path = mdir / "train_status.json"
    merged = json.loads(status_path.read_text()) if status_path.is_file() else {}
    merged.update(statuses)
    _write_json(status_path, merged)
    return statuses


# evaluate

@dataclass
class RunReport:
    metrics: list[MetricsReport] = field(default_factory=list)
    algorithms: dict[str, str] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    config_hash: str = ""
    plots: dict[str, list[str]] = field(default_factory=dict)
    model_files: dict[str, str] = field(default_factory=dict)
    acceptance: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metrics"] = [m.to_dict() for m in self.metrics]
        return d

    def r2(self, model_id: str):
        for m in self.metrics:
            if m.model == model_id:
                return m.r2
        return None


def _fmt(v) -> str:
    return "undefined" if v is None else repr(float(v))


def write_report_csv(path, report: RunReport):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for m in report.metrics:
            w.writerow([m.model, report.algorithms[m.model], _fmt(m.mae), _fmt(m.mse),
                        _fmt(m.medae), _fmt(m.r2), m.n])


def write_report_md(path, report: RunReport, cfg: RunConfig, prepared: dict):
    def num(v):
        return "undefined" if v is None else f"{v:.3f}"

    lines = ["# Comparative model performance", "",
             "| Model | Algorithm | MAE | MSE | MedAE | R2 |",
             "|---|---|---|---|---|---|"]
    for m in report.metrics:
        lines.append(f"| {m.model} | {report.algorithms[m.model]} | {num(m.mae)} | "
                     f"{num(m.mse)} | {num(m.medae)} | {num(m.r2)} |")
    constant = prepared.get("constant_columns") or []
    lines += [
        "",
        "## Run notes",
        "",
        f"- profile: {cfg.profile}; seed: {cfg.seed}; config hash: {cfg.digest()}",
        f"- split: ratio {cfg.split['ratio']}, mode {cfg.split['mode']}; "
        f"{prepared.get('n_train')} train / {prepared.get('n_test')} test rows",
        f"- hourly rows dropped for missing cells: {prepared.get('n_dropped')}",
        f"- features standardized on the training split (population std): "
        f"{'yes' if prepared.get('standardized', True) else 'no'}",
        f"- constant feature columns (std set to 1): {', '.join(constant) if constant else 'none'}",
        "- R2 is computed against the mean of the actual test values",
    ]
    lines += [f"- {note}" for note in report.notes]
    if report.failures:
        lines += ["", "## Failed or missing models", ""]
        lines += [f"- {mid}: {msg}" for mid, msg in report.failures.items()]
    lines += ["", "## Hyperparameters", ""]
    for m in report.metrics:
        lines.append(f"- {m.model}: `{json.dumps(cfg.models[m.model], sort_keys=True)}`")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _plot(series: diag.PlotSeries, plot_dir: Path, stem: str) -> list[str]:
    diag.write_series_csv(plot_dir / f"{stem}.csv", series)
    diag.render_svg(plot_dir / f"{stem}.svg", series)
    return [f"plots/{stem}.svg", f"plots/{stem}.csv"]


def evaluate_models(test, fitted: dict, algorithms: dict, report_dir: Path,
                    report: RunReport | None = None, plots: bool = True) -> RunReport:
    """Score already-fitted models on ``test`` and emit per-model artifacts."""
    report = report or RunReport()
    mdir = report_dir / "metrics"
    pdir = report_dir / "plots"
    mdir.mkdir(parents=True, exist_ok=True)
    pdir.mkdir(parents=True, exist_ok=True)
    for mid, model in fitted.items():
        y_hat = model.predict(test.X)
        if not np.all(np.isfinite(y_hat)):
            report.failures[mid] = "non-finite predictions"
            continue
        m = evaluate_metrics(test.y, y_hat, model=mid, split="test")
        report.metrics.append(m)
        report.algorithms[mid] = algorithms[mid]
        _write_json(mdir / f"{mid}.json", {**m.to_dict(), "algorithm": algorithms[mid]})
        if not plots:
            continue
        name = algorithms[mid]
        files = _plot(diag.pred_qq_series(test.y, y_hat, title=f"{mid}: {name}"), pdir, f"{mid}_qq")
        files += _plot(diag.residual_series(test.y, y_hat, title=f"{mid}: residuals"),
                       pdir, f"{mid}_residual")
        trace = getattr(model, "trace_", None)
        if trace is not None:
            files += _plot(diag.epoch_series(trace.loss, "loss", title=f"{mid}: training loss"),
                           pdir, f"{mid}_loss")
            files += _plot(diag.epoch_series(trace.mse, "mse", title=f"{mid}: training MSE"),
                           pdir, f"{mid}_mse")
        report.plots[mid] = files
    return report


def cmd_evaluate(cfg: RunConfig, out_dir, models=None, plots: bool = True) -> RunReport:
    out = Path(out_dir)
    pdir, mdir, rdir = out / PREPARED, out / MODELS, out / REPORT
    test = read_dataset_csv(pdir / "test.csv")
    prepared = json.loads((pdir / "prepared.json").read_text(encoding="utf-8"))
    status_path = mdir / "train_status.json"
    statuses = json.loads(status_path.read_text()) if status_path.is_file() else {}

    report = RunReport(seed=cfg.seed, config_hash=cfg.digest())
    fitted, algorithms = {}, {}
    for mid in (models if models is not None else cfg.selected):
        path = mdir / f"{mid}.json"
        if not path.is_file():
            msg = statuses.get(mid, {}).get("message") or "no fitted model found"
            report.failures[mid] = f"NotFittedError: {msg}"
            continue
        fitted[mid] = load_model(path)
        algorithms[mid] = spec_for(mid).label(cfg.models[mid])
        report.model_files[mid] = str(path.relative_to(out))
    if not fitted:
        raise NotFittedError("no fitted models to evaluate")

    rdir.mkdir(parents=True, exist_ok=True)
    evaluate_models(test, fitted, algorithms, rdir, report, plots)
    if plots:
        hourly = read_dataset_csv(pdir / "hourly.csv")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                chi = diag.chi2_qq_series(hourly.X, title="Chi-square Q-Q of the feature matrix")
            report.plots["features"] = _plot(chi, rdir / "plots", "chi2_qq")
        except (ValueError, WindbenchError) as exc:
            report.notes.append(f"chi-square Q-Q skipped: {exc}")

    write_report_csv(rdir / "report.csv", report)
    write_report_md(rdir / "report.md", report, cfg, prepared)
    return report


# reproduce

def check_acceptance(acc: dict, report: RunReport, elapsed: float) -> list[dict]:
    checks = []
    for mid, floor in acc.get("r2_min", {}).items():
        r2 = report.r2(mid)
        checks.append({"check": f"{mid} test R2 >= {floor}", "value": r2,
                       "passed": r2 is not None and r2 >= floor})
    for mid, (target, tol) in acc.get("r2_target", {}).items():
        r2 = report.r2(mid)
        checks.append({"check": f"{mid} test R2 within {tol} of {target}", "value": r2,
                       "passed": r2 is not None and abs(r2 - target) <= tol})
    for hi, lo in acc.get("r2_order", []):
        a, b = report.r2(hi), report.r2(lo)
        checks.append({"check": f"R2 {hi} > {lo}", "value": [a, b],
                       "passed": a is not None and b is not None and a > b})
    if "max_seconds" in acc:
        checks.append({"check": f"run time < {acc['max_seconds']} s", "value": elapsed,
                       "passed": elapsed < acc["max_seconds"]})
    return checks


def cmd_reproduce(cfg: RunConfig, out_dir, jobs: int = 1, csv_path=None, mapping_path=None):
    """Full run. Returns (report, exit_code) with 0 ok, 3 training failure,
    4 binding acceptance failure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    start = time.perf_counter()

    t = time.perf_counter()
    prepared = cmd_prepare(cfg, out, csv_path, mapping_path)
    timings["prepare"] = time.perf_counter() - t

    t = time.perf_counter()
    statuses = cmd_train(cfg, out, cfg.selected, jobs)
    timings["train"] = time.perf_counter() - t
    for mid, s in statuses.items():
        timings[f"train:{mid}"] = s["seconds"]

    t = time.perf_counter()
    report = cmd_evaluate(cfg, out, cfg.selected)
    timings["evaluate"] = time.perf_counter() - t
    elapsed = time.perf_counter() - start
    timings["total"] = elapsed
    report.timings = timings

    report.acceptance = check_acceptance(cfg.acceptance, report, elapsed)
    binding = cfg.acceptance.get("binding", True)
    for c in report.acceptance:
        log.info("[%s] %s (%s)", "PASS" if c["passed"] else "FAIL", c["check"], c["value"])

    run = report.to_dict()
    run.update({"config": cfg.to_dict(), "n_dropped": prepared["n_dropped"],
                "constant_columns": prepared["constant_columns"], "acceptance_binding": binding,
                "train_status": statuses})
    _write_json(out / REPORT / "run_report.json", run)

    if any(s["status"] != "ok" for s in statuses.values()):
        return report, 3
    if binding and not all(c["passed"] for c in report.acceptance):
        return report, 4
    return report, 0


__all__ = ["cmd_prepare", "cmd_train", "cmd_evaluate", "cmd_reproduce", "evaluate_models",
           "check_acceptance", "RunReport"]
