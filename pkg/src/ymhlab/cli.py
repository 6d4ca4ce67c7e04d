"""Command line interface: run / report / refine.

Exit codes: 0 all checks pass, 1 a verification check failed, 2
configuration or input errors, 3 oracle-unsupported without a regression
pin, 4 flow/state corruption.
"""

import argparse
import os
import sys

import numpy as np

from . import harness, plots, refine
from .constants import IFUNC_DROP, IFUNC_FLOOR
from .errors import (ConfigurationError, OracleUnsupportedError,
                     PreconditionError, StateCorruptionError, YmhError)


def _cmd_run(args):
    cfg = harness.load_config(args.config)
    res = harness.run_experiment(cfg)
    print(res.report_text, end="")
    if res.oracle_type is None and cfg.expect_type is None \
            and cfg.bundle.higgs_blocks:
        print("error: HN oracle unsupported for this configuration and no "
              "[expect] type pinned", file=sys.stderr)
        return 3
    if args.figures:
        prefix = os.path.splitext(cfg.csv_path)[0]
        for p in plots.render_report_figures(res.result.columns,
                                             res.result.rows, prefix):
            print(f"figure: {p}")
    return 0 if res.passed else 1


def _cmd_report(args):
    try:
        columns, rows = harness.read_csv(args.csv)
    except ConfigurationError as exc:
        print(f"error: malformed CSV: {exc}", file=sys.stderr)
        return 2
    dt = None
    stop_tol = args.stop_tolerance
    if args.config:
        cfg = harness.load_config(args.config)
        dt = cfg.params.dt(cfg.grid)
        if stop_tol is None:
            stop_tol = cfg.params.stop_tolerance
    violations = harness.check_monotone(columns, rows, dt=dt)
    i_series = [r["i_func"] for r in rows if np.isfinite(r["i_func"])]
    i0, i_final = i_series[0], i_series[-1]
    budget = stop_tol if stop_tol is not None else \
        IFUNC_DROP * max(i0, IFUNC_FLOOR)
    i_ok = i_final < budget

    print(f"report for {args.csv}: {len(rows)} rows, "
          f"t in [{rows[0]['t']:.6g}, {rows[-1]['t']:.6g}]")
    mono_cols = ["ymh", "sup_theta"] + [c for c in columns
                                        if c.startswith("hym_")]
    for col in mono_cols:
        vals = [r[col] for r in rows]
        bad = [v for c, k, v in violations if c == col]
        status = "ok" if not bad else f"VIOLATION (+{max(bad):.3e})"
        print(f"  {col:12s} {vals[0]:12.6g} -> {vals[-1]:12.6g}   {status}")
    print(f"  i_func       {i0:12.6g} -> {i_final:12.6g}   "
          f"{'ok' if i_ok else 'ABOVE BUDGET'} (budget {budget:.3e})")
    if args.figures:
        prefix = os.path.splitext(args.csv)[0]
        figdir = args.figdir
        if figdir:
            os.makedirs(figdir, exist_ok=True)
            prefix = os.path.join(figdir, os.path.basename(prefix))
        for p in plots.render_report_figures(columns, rows, prefix):
            print(f"figure: {p}")
    if violations:
        col, k, inc = violations[0]
        print(f"error: {col} increases by {inc:.3e} at row {k}",
              file=sys.stderr)
        return 1
    if not i_ok:
        print(f"error: final i_func {i_final:.3e} above budget {budget:.3e}",
              file=sys.stderr)
        return 1
    return 0


def _cmd_refine(args):
    cfg = harness.load_config(args.config)
    report = refine.run_refine(cfg, args.levels)
    print(refine.format_refine_report(report), end="")
    if args.figures:
        out = os.path.splitext(cfg.csv_path)[0] + "_refine.png"
        print(f"figure: {plots.render_refine_figure(report, out)}")
    return 0 if report["ok"] else 1


def build_parser():
    ap = argparse.ArgumentParser(
        prog="ymhlab",
        description="metric heat flow laboratory on split Higgs bundles")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config end to end")
    p_run.add_argument("config")
    p_run.add_argument("--no-figures", dest="figures", action="store_false")
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="verify a diagnostics CSV")
    p_rep.add_argument("csv")
    p_rep.add_argument("--stop-tolerance", type=float, default=None)
    p_rep.add_argument("--config", default=None,
                       help="recover integrator step for the exact slack")
    p_rep.add_argument("--figdir", default=None)
    p_rep.add_argument("--no-figures", dest="figures", action="store_false")
    p_rep.set_defaults(func=_cmd_report)

    p_ref = sub.add_parser("refine", help="grid refinement study")
    p_ref.add_argument("config")
    p_ref.add_argument("--levels", type=int, default=3)
    p_ref.add_argument("--no-figures", dest="figures", action="store_false")
    p_ref.set_defaults(func=_cmd_refine)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OracleUnsupportedError as exc:
        print(f"error: oracle unsupported: {exc}", file=sys.stderr)
        return 3
    except StateCorruptionError as exc:
        print(f"error: flow aborted: {exc}", file=sys.stderr)
        return 4
    except YmhError as exc:                                # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
