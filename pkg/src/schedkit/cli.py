"""Command-line runner.

Precedence: command-line flags override the config file, which overrides
built-in defaults. Exit status is 0 whenever a report was written, whatever
its ``deadline_met`` says; 2 means the config was invalid and 3 an I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .config import ExperimentConfig, format_duration, load_config, parse_duration
from .errors import ConfigInvalid
from .report import ExperimentReport
from .sim import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

log = logging.getLogger("schedkit")


def _configure_logging() -> None:
    level = os.environ.get("SCHEDKIT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _duration(text: str) -> float:
    try:
        return parse_duration(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _duration_list(text: str) -> tuple[float, ...]:
    return tuple(_duration(part) for part in text.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schedkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config", type=Path)
    run.add_argument("--algorithm", help="registered algorithm name")
    run.add_argument("--deadline", type=_duration, help='deadline such as "35m" or "2100"')
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--format", choices=("csv", "structured"), default="structured",
                     help="report format (default: structured JSON)")

    sweep = sub.add_parser("sweep", help="run every algorithm against every deadline")
    sweep.add_argument("config", type=Path)
    sweep.add_argument("--deadlines", type=_duration_list,
                       help="comma-separated durations; defaults to the config's [sweep] deadlines")
    sweep.add_argument("--algorithms", help="comma-separated names; defaults to [sweep] or the config's algorithm")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--out", help="output directory; one subdirectory per run")
    sweep.add_argument("--jobs", type=int, default=1, help="experiments to run in parallel")
    return parser


def write_report(report: ExperimentReport, out_dir: Path, fmt: str) -> Path:
    if fmt == "csv":
        return report.write_csv(out_dir / "report.csv")
    return report.write_json(out_dir / "report.json")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config).with_overrides(
        algorithm=args.algorithm, deadline=args.deadline, seed=args.seed, output_dir=args.out
    )
    out = Path(cfg.output_dir)
    report = run_experiment(cfg, out_dir=out)
    write_report(report, out, args.format)
    print(report.summary_line())
    return EXIT_OK


def _sweep_one(job: tuple[ExperimentConfig, str]) -> ExperimentReport:
    cfg, out = job
    report = run_experiment(cfg, out_dir=out)
    report.write_json(Path(out) / "report.json")
    return report


def sweep_table(rows: Sequence[tuple[str, float, ExperimentReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "deadline", "makespan", "met"])
    for name, deadline, report in rows:
        makespan = "" if report.makespan is None else f"{report.makespan:.1f}"
        w.writerow([name, format_duration(deadline), makespan, "yes" if report.deadline_met else "X"])
    return buf.getvalue()


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_config(args.config).with_overrides(seed=args.seed, output_dir=args.out)
    deadlines = args.deadlines if args.deadlines is not None else base.sweep_deadlines
    if not deadlines:
        raise ConfigInvalid("sweep: the deadline list is empty")
    if args.algorithms:
        algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    else:
        algorithms = base.sweep_algorithms or (base.algorithm.name,)
    jobs, keys = [], []
    for name in algorithms:
        for deadline in deadlines:
            cfg = base.with_overrides(algorithm=name, deadline=deadline)
            out = Path(base.output_dir) / f"{name}-{format_duration(deadline)}"
            jobs.append((cfg, str(out)))
            keys.append((name, deadline))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_sweep_one, jobs))
    else:
        reports = [_sweep_one(job) for job in jobs]
    rows = [(name, d, r) for (name, d), r in zip(keys, reports)]
    table = sweep_table(rows)
    out = Path(base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_sweep(args)
    except ConfigInvalid as err:
        for problem in err.problems:
            print(f"config invalid: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
