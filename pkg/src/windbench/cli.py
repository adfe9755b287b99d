"""Command-line entry point.

    windbench synth-data --out DIR
    windbench prepare    --out RUN [--data CSV --mapping JSON]
    windbench train      --out RUN [--models 1,7,12] [--jobs N]
    windbench evaluate   --out RUN
    windbench reproduce  --out RUN [--profile synthetic]

Exit codes: 0 ok, 1 usage, 2 data error, 3 training failure, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline, synthetic
from .config import ConfigError, RunConfig, resolve_models
from .errors import DataError, NotFittedError, TrainingError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN, EXIT_ACCEPT = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 means a data error here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="profiles JSON file (default: bundled profiles)")
    common.add_argument("--profile", default="synthetic",
                        help="profile name: synthetic, table1, table1-prose (default: synthetic)")
    common.add_argument("--models", help="comma-separated ids, e.g. Model-1,7 or 'all'")
    common.add_argument("--seed", type=int, help="run seed (split and seeded models)")
    common.add_argument("--out", default="windbench_run", help="run directory")
    common.add_argument("--jobs", type=int, default=1, help="models trained in parallel")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="raw minute-resolution CSV")
    data.add_argument("--mapping", help="column mapping JSON")

    parser = _Parser(prog="windbench", description="Wind-speed regression benchmark.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("prepare", parents=[common, data], help="raw CSV -> prepared train/test")
    sub.add_parser("train", parents=[common], help="fit models on the prepared train split")
    sub.add_parser("evaluate", parents=[common], help="score fitted models, write report")
    sub.add_parser("reproduce", parents=[common, data], help="prepare + train + evaluate + checks")
    syn = sub.add_parser("synth-data", parents=[common], help="write the synthetic minute CSV")
    syn.add_argument("--minutes-per-hour", type=int, default=60)
    syn.add_argument("--days", type=int, default=synthetic.N_DAYS)
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.from_profile(args.profile, args.config)
    if args.seed is not None:
        cfg.set_seed(args.seed)
    if args.models is not None:
        cfg.selected = resolve_models(args.models)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def run(args) -> int:
    if args.verb == "synth-data":
        seed = args.seed if args.seed is not None else 0
        csv_path, map_path = synthetic.write_bundle(args.out, seed, args.minutes_per_hour, args.days)
        print(f"wrote {csv_path} and {map_path}")
        return EXIT_OK

    cfg = _config(args)
    if args.verb == "prepare":
        info = pipeline.cmd_prepare(cfg, args.out, args.data, args.mapping)
        print(f"prepared {info['n']} hourly rows ({info['n_dropped']} dropped): "
              f"{info['n_train']} train / {info['n_test']} test")
        return EXIT_OK
    if args.verb == "train":
        statuses = pipeline.cmd_train(cfg, args.out, cfg.selected, args.jobs)
        for mid, s in statuses.items():
            print(f"{mid}: {s['status']} {s['message']}".rstrip())
        return EXIT_OK if all(s["status"] == "ok" for s in statuses.values()) else EXIT_TRAIN
    if args.verb == "evaluate":
        report = pipeline.cmd_evaluate(cfg, args.out, cfg.selected)
        print((pipeline.Path(args.out) / pipeline.REPORT / "report.md").read_text())
        return EXIT_OK if not report.failures else EXIT_TRAIN
    if args.verb == "reproduce":
        report, code = pipeline.cmd_reproduce(cfg, args.out, args.jobs, args.data, args.mapping)
        print((pipeline.Path(args.out) / pipeline.REPORT / "report.md").read_text())
        for c in report.acceptance:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['check']} ({c['value']})")
        return code
    raise ConfigError(f"unknown verb {args.verb!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"windbench: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"windbench: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, NotFittedError) as exc:
        print(f"windbench: training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
