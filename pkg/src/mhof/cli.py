"""Command-line front end.

    mhof run <config> [-o DIR]
    mhof compare <config> [-o DIR] [-j N]
    mhof report <trace-or-dir> [-o DIR]

Exit codes: 0 success, 1 audit failure (report), 2 invalid input, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from mhof import audit, config, render
from mhof import trace as tr
from mhof.errors import ConfigError, TraceParseError
from mhof.schemes import grid_compare, run

EXIT_OK, EXIT_AUDIT, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

COMPARE_COLUMNS = ("scheme", "config", "seed", "mu0", "rho", "eta", "status", "error", "final_epoch",
                   "final_ell", "final_reg", "ehv", "selected_epoch", "selected_ell", "selected_reg",
                   "shrinks")
DISPERSION_COLUMNS = ("scheme", "cells", "failed", "iqr_selected_ell", "iqr_final_ell",
                      "median_selected_ell", "median_final_ell")


def _fail(kind: str, message: str, code: int) -> int:
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def _config_error(exc: ConfigError) -> int:
    return _fail("config", f"{exc.field}: {exc}" if exc.field else str(exc), EXIT_INPUT)


def _render_all(trace, out_dir: Path, prefix: str = "") -> None:
    if not trace.records:
        return
    render.render_dynamics(trace, out_dir / f"{prefix}dynamics.svg")
    render.render_phase_portrait(trace, 0, out_dir / f"{prefix}phase.svg")


def cmd_run(config_path, out_dir=None) -> int:
    try:
        cfg = config.load(config_path)
    except ConfigError as exc:
        return _config_error(exc)
    if cfg.n_runs() != 1:
        return _fail("config", f"run expects exactly one run, config expands to {cfg.n_runs()}", EXIT_INPUT)
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (scheme_cfg,) = [c for cfgs in cfg.grids.values() for c in cfgs]
    result = run(cfg.problem, cfg.optimizer, scheme_cfg, cfg.seeds[0])
    tr.save(result.trace, out / "trace.jsonl")
    _render_all(result.trace, out)
    if not result.ok:
        return _fail("numeric", f"epoch {result.failed_epoch}: {result.error}", EXIT_NUMERIC)
    print(f"selected_epoch={result.selected_epoch} final_ehv={result.final_ehv!r} "
          f"shrinks={len(result.trace.shrink_epochs())}")
    return EXIT_OK


def _write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", restval="")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def cmd_compare(config_path, out_dir=None, parallelism: int = 1) -> int:
    try:
        cfg = config.load(config_path)
    except ConfigError as exc:
        return _config_error(exc)
    out = Path(out_dir or cfg.output)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    comp = grid_compare(cfg.problem, cfg.optimizer, cfg.grids, cfg.seeds, parallelism=parallelism)
    for cell in comp.cells:
        if cell.result is not None:
            tr.save(cell.result.trace, traces / f"{cell.scheme}_c{cell.config_index:03d}_s{cell.seed}.jsonl")
    _write_rows(out / "comparison.csv", COMPARE_COLUMNS, comp.rows())
    disp_rows = [{"scheme": s, **v} for s, v in comp.dispersion.items()]
    _write_rows(out / "dispersion.csv", DISPERSION_COLUMNS, disp_rows)
    for row in disp_rows:
        print(f"{row['scheme']}: cells={row['cells']} failed={row['failed']} "
              f"iqr_selected_ell={row['iqr_selected_ell']:.6g} iqr_final_ell={row['iqr_final_ell']:.6g}")
    n_ok = sum(c.ok for c in comp.cells)
    if n_ok == 0:
        return _fail("numeric", "every cell failed", EXIT_NUMERIC)
    return EXIT_OK


def cmd_report(path, out_dir=None) -> int:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.rglob("*.jsonl"))
    elif path.is_file():
        files = [path]
    else:
        return _fail("input", f"{path}: no such file or directory", EXIT_INPUT)
    if not files:
        return _fail("input", f"{path}: no trace files", EXIT_INPUT)
    out = Path(out_dir) if out_dir else (path if path.is_dir() else path.parent) / "report"
    out.mkdir(parents=True, exist_ok=True)
    failed = False
    for f in files:
        try:
            trace = tr.load(f)
        except TraceParseError as exc:
            return _fail("parse", f"{f}: {exc}", EXIT_INPUT)
        label = str(f.relative_to(path)) if path.is_dir() else f.name
        print(f"== {label}")
        _render_all(trace, out, prefix=f"{f.stem}_")
        for check in audit.audit(trace):
            print(check.line(label))
            failed |= not check.passed
    return EXIT_AUDIT if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mhof", description="Multiplier feedback training experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("config")
    p.add_argument("-o", "--out", default=None)
    p = sub.add_parser("compare", help="run a grid of schemes and seeds")
    p.add_argument("config")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("-j", "--jobs", type=int, default=1)
    p = sub.add_parser("report", help="audit and re-render stored traces")
    p.add_argument("path")
    p.add_argument("-o", "--out", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "compare":
        if args.jobs < 1:
            return _fail("input", "-j must be >= 1", EXIT_INPUT)
        return cmd_compare(args.config, args.out, args.jobs)
    return cmd_report(args.path, args.out)


if __name__ == "__main__":
    sys.exit(main())
