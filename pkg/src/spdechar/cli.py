"""Command-line runner: ``spdechar run|describe|version``."""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from pathlib import Path

from . import __version__, parallel
from .errors import ConfigError, UsageError
from .suites import ExperimentConfig, SuiteReport, describe, fmt, run_suites

EXIT_FAIL, EXIT_USAGE = 1, 2


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return ExperimentConfig.parse(text, env_seed=os.environ.get("SPDECHAR_SEED"))


def write_summary(report: SuiteReport, out: Path) -> None:
    lines = [f"timestamp: {report.stamp['timestamp']}",
             f"version: {report.stamp['version']}",
             f"seed: {report.stamp['seed']}",
             f"experiment: {report.stamp['experiment']}"]
    for c in report.checks:
        verdict = "PASS" if c.passed else "FAIL"
        lines.append(f"{verdict} {c.suite}.{c.name}: {fmt(c.measured)} {c.relation} "
                     f"{fmt(c.threshold)}")
    lines.append(f"overall: {'PASS' if report.passed else 'FAIL'}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def run(cfg: ExperimentConfig, out: Path | None = None) -> SuiteReport:
    """Run the configured suite(s); writes CSVs and ``summary.txt`` to the output directory."""
    out = Path(cfg.output) if out is None else out
    report = run_suites(cfg, out)
    report.stamp = {
        "version": __version__, "seed": cfg.seed, "experiment": cfg.experiment,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    write_summary(report, out)
    return report


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spdechar",
                                description="Stochastic characteristics experiment runner")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the suite named in a config file")
    r.add_argument("--config", required=True, help="key = value config file")
    r.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    d = sub.add_parser("describe", help="explain a suite and list its defaults")
    d.add_argument("name")
    sub.add_parser("version", help="print the package version")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "version":
            print(__version__)
            return 0
        if args.command == "describe":
            print(describe(args.name))
            return 0
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        parallel.set_threads(args.threads)
        cfg = load_config(args.config)
        report = run(cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.suite}.{c.name}")
    print(f"overall: {'PASS' if report.passed else 'FAIL'} ({cfg.output})")
    return 0 if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
