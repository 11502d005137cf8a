"""Command-line entry point: ``fractalaw <experiment> --config <path>``.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 config error,
3 the contraction hypothesis is violated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from .diagnostics import EXPERIMENTS, ConfigError, ExperimentConfig, HypothesisViolation, Report, run
from .measures import MeasureError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_HYPOTHESIS = 0, 1, 2, 3


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_json(report: Report) -> str:
    return json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"


def write_report(report: Report, out: str | os.PathLike) -> tuple[Path, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rj, cc = out / "report.json", out / "curves.csv"
    _atomic_write(rj, report_json(report))
    _atomic_write(cc, report.curves_csv())
    return rj, cc


def load_config(path, experiment=None, seed=None, threads=1) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if experiment is not None:
        if raw.get("experiment", experiment) != experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
        raw["experiment"] = experiment
    return ExperimentConfig.from_dict(raw, seed=seed, threads=threads)


def run_experiment(config_path, out=None, seed=None, threads=1, experiment=None, stream=sys.stderr):
    """Run one config end to end; returns ``(exit_code, report or None)``."""
    try:
        cfg = load_config(config_path, experiment, seed, threads)
        report = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG, None
    except HypothesisViolation as exc:
        print(f"hypothesis violated: {exc}", file=stream)
        return EXIT_HYPOTHESIS, None
    except MeasureError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG, None
    if out is None:
        out = cfg.raw.get("output") or Path("runs") / report.experiment_id
    write_report(report, out)
    for v in report.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: {v.value!r} ({v.comparison})", file=stream)
    return (EXIT_PASS if report.passed else EXIT_FAIL), report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fractalaw", description="Numerical checks for random self-similar measures.")
    ap.add_argument("experiment", choices=sorted(EXPERIMENTS))
    ap.add_argument("--config", required=True, help="experiment config (JSON)")
    ap.add_argument("--out", default=None, help="output directory for report.json and curves.csv")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed (unsigned 64-bit)")
    ap.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = run_experiment(args.config, args.out, args.seed, args.threads, args.experiment)
    return code


if __name__ == "__main__":
    sys.exit(main())
