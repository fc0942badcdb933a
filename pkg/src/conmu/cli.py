"""Command-line benchmark harness.

Subcommands::

    conmu run <config.json>      single experiment, all requested methods
    conmu sweep <sweep.json>     knob sweep along one ablation axis
    conmu report <results.json>  render the comparison table for a results file

Exit code 0 on success, nonzero with a diagnostic on any error.
"""

import os

# Pin BLAS threading before numpy loads so emitted numbers do not depend on
# the host's core count.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import sys
from pathlib import Path

from . import __version__, _kernels
from .harness import (ConfigError, load_results, parse_config, parse_sweep,
                      render_report, run_experiment, run_sweep, sweep_csv_text,
                      sweep_dict)


def _dump_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{p}: invalid JSON ({exc})") from None


def _cmd_run(args) -> int:
    cfg = parse_config(_load_json(args.config))
    results = run_experiment(cfg, jobs=args.jobs)
    out = Path(args.out)
    _dump_json(results.results_dict(), out)
    _dump_json(results.timings_dict(), out.with_name(out.stem + "_timings.json"))
    out.with_suffix(".csv").write_text(results.csv_text(), encoding="utf-8")
    table, _ = render_report(results.results_dict(), results.timings_dict())
    print(f"backend: {results.backend}")
    print(table)
    print(f"wrote {out}")
    return 0


def _cmd_sweep(args) -> int:
    spec = parse_sweep(_load_json(args.sweep))
    points = run_sweep(spec, jobs=args.jobs)
    out = Path(args.out)
    _dump_json(sweep_dict(spec, points), out)
    csv_text = sweep_csv_text(spec, points)
    out.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
    print(csv_text, end="")
    print(f"wrote {out}")
    return 0


def _cmd_report(args) -> int:
    results = load_results(args.results)
    timings = None
    sidecar = Path(args.results)
    sidecar = sidecar.with_name(sidecar.stem + "_timings.json")
    if sidecar.exists():
        timings = json.loads(sidecar.read_text(encoding="utf-8"))
    table, csv_text = render_report(results, timings)
    print(table)
    csv_path = Path(args.csv) if args.csv else \
        Path(args.results).with_name(Path(args.results).stem + "_report.csv")
    csv_path.write_text(csv_text, encoding="utf-8")
    print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conmu",
        description="Controllable machine unlearning benchmark harness")
    parser.add_argument("--version", action="version",
                        version=f"conmu {__version__} (backend: {_kernels.BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config", help="experiment config JSON")
    p_run.add_argument("--out", default="results.json", help="results JSON path")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one knob axis")
    p_sweep.add_argument("sweep", help="sweep spec JSON")
    p_sweep.add_argument("--out", default="sweep_results.json")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_report = sub.add_parser("report", help="render a comparison table")
    p_report.add_argument("results", help="results JSON from 'run'")
    p_report.add_argument("--csv", default=None, help="machine-readable CSV path")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
