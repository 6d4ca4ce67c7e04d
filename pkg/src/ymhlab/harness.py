"""Experiment harness: plain-text configs, runs, CSV/snapshot/report output.

Config format: bracketed sections with key = value lines,

    [geometry] n
    [bundle]   degrees, blocks (one per indented line), seed, holo_tol
    [flow]     dt_safety, t_max, stop_tolerance, snapshot_interval
    [functionals] hym_pairs = (alpha,N);(alpha,N);...   lp_for_critical = p
    [output]   csv_path, snapshot_path, report_path (relative to the config)
    [expect]   type = mu_1, ..., mu_R   (optional regression pin)

Block lines: "i,j,constant,value", "i,j,solved,seed,scale",
"i,j,aliased,value" with 1-based factor indices (i = target row).

CSV columns, in order: t, ymh, i_func, sup_theta, sup_phi_sq, min_eig_h,
trace_heat_res, acd_p, one hym_<alpha>_<N> per configured pair, lambda_1..R,
spatial_dev.  trace_heat_res on row k is centered at snapshot k-1 and is nan
on the first two rows; extra hym pairs append, never reorder.
"""

import configparser
import io
import os
import numpy as np
from dataclasses import dataclass, field as dc_field

from .geometry import TorusGrid
from .bundle import (BundleConfig, HiggsBlock, build_background, build_higgs)
from .flow import FlowParams, run, csv_columns
from . import hn
from . import snapshotio
from .constants import (ACD_DROP, DOMINANCE_TOL, EPS_INT_FACTOR, EPS_INT_FLOOR,
                        IFUNC_DROP, IFUNC_FLOOR, PHI_SUP_GROWTH, TYPE_TOL)
from .errors import ConfigurationError, OracleUnsupportedError


@dataclass
class ExperimentConfig:
    path: str
    grid: TorusGrid
    bundle: BundleConfig
    params: FlowParams
    hym_pairs: tuple = ((1.0, 0.0), (2.0, 0.0), (4.0, 3.0))
    lp: float = 2.0
    seed: int = 0
    holo_tol: float = None
    csv_path: str = ""
    snapshot_path: str = ""
    report_path: str = ""
    expect_type: tuple = None


def _parse_blocks(raw, seed):
    blocks = []
    for lineno, line in enumerate(raw.splitlines()):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 3:
            raise ConfigurationError(
                f"block line {lineno + 1} {line!r}: need i,j,kind[,...]")
        try:
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
        except ValueError as exc:
            raise ConfigurationError(
                f"block line {lineno + 1} {line!r}: bad indices ({exc})")
        kind = parts[2]
        try:
            if kind in ("constant", "aliased"):
                value = complex(parts[3]) if len(parts) > 3 else 1.0
                blocks.append(HiggsBlock(i, j, kind, value=value))
            elif kind == "solved":
                bseed = int(parts[3]) if len(parts) > 3 else 0
                scale = float(parts[4]) if len(parts) > 4 else 1.0
                blocks.append(HiggsBlock(i, j, "solved",
                                         seed=(bseed ^ seed) & (2**64 - 1),
                                         scale=scale))
            else:
                raise ConfigurationError(
                    f"block line {lineno + 1}: unknown kind {kind!r}")
        except (ValueError, IndexError) as exc:
            raise ConfigurationError(
                f"block line {lineno + 1} {line!r}: {exc}")
    return tuple(blocks)


def load_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}")
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}")

    def need(section, key, cast=str):
        if not cp.has_option(section, key):
            raise ConfigurationError(f"[{section}] {key} is required")
        raw = cp.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{section}] {key} = {raw!r}: {exc}")

    def opt(section, key, default, cast=float):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{section}] {key} = {raw!r}: {exc}")

    grid = TorusGrid(need("geometry", "n", int))
    seed = opt("bundle", "seed", 0, int)
    degrees = tuple(int(s) for s in need("bundle", "degrees").split(","))
    blocks = _parse_blocks(cp.get("bundle", "blocks", fallback=""), seed)
    bundle = BundleConfig(degrees, blocks)
    params = FlowParams(
        t_max=need("flow", "t_max", float),
        dt_safety=opt("flow", "dt_safety", 0.2),
        stop_tolerance=opt("flow", "stop_tolerance", 1e-8),
        snapshot_interval=opt("flow", "snapshot_interval", 0.05),
    )
    hym_pairs = []
    for token in opt("functionals", "hym_pairs", "(1,0);(2,0);(4,3)", str).split(";"):
        token = token.strip().strip("()")
        if not token:
            continue
        try:
            alpha, N = (float(v) for v in token.split(","))
        except ValueError:
            raise ConfigurationError(f"[functionals] hym_pairs: bad pair {token!r}")
        if alpha < 1:
            raise ConfigurationError(f"[functionals] hym_pairs: alpha {alpha} < 1")
        hym_pairs.append((alpha, N))
    lp = opt("functionals", "lp_for_critical", 2.0)
    if lp < 1:
        raise ConfigurationError(f"[functionals] lp_for_critical = {lp} < 1")

    base = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]

    def out(key, suffix):
        rel = opt("output", key, f"{stem}{suffix}", str)
        return rel if os.path.isabs(rel) else os.path.join(base, rel)

    expect = None
    if cp.has_option("expect", "type"):
        expect = tuple(float(v) for v in cp.get("expect", "type").split(","))
        if len(expect) != bundle.rank:
            raise ConfigurationError("[expect] type length must equal the rank")
    holo_tol = opt("bundle", "holo_tol", None,
                   lambda s: float(s))
    return ExperimentConfig(
        path=path, grid=grid, bundle=bundle, params=params,
        hym_pairs=tuple(hym_pairs), lp=lp, seed=seed, holo_tol=holo_tol,
        csv_path=out("csv_path", ".csv"),
        snapshot_path=out("snapshot_path", ".snap"),
        report_path=out("report_path", "_report.txt"),
        expect_type=expect,
    )


# -- CSV ----------------------------------------------------------------------

def write_csv(path, columns, rows):
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(row[c])) for c in columns) + "\n")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigurationError("no rows")
    columns = lines[0].split(",")
    rows = []
    for k, ln in enumerate(lines[1:]):
        vals = ln.split(",")
        if len(vals) != len(columns):
            raise ConfigurationError(f"row {k + 1}: {len(vals)} fields, "
                                     f"expected {len(columns)}")
        try:
            rows.append({c: float(v) for c, v in zip(columns, vals)})
        except ValueError as exc:
            raise ConfigurationError(f"row {k + 1}: {exc}")
    if not rows:
        raise ConfigurationError("no rows")
    return columns, rows


# -- checks --------------------------------------------------------------------

def eps_int(series, dt):
    """Monotonicity slack: EPS_INT_FACTOR * dt * max observed |dE/dt|."""
    vals = [(t, v) for t, v in series if np.isfinite(v)]
    worst = 0.0
    for (t0, v0), (t1, v1) in zip(vals, vals[1:]):
        if t1 > t0:
            worst = max(worst, abs(v1 - v0) / (t1 - t0))
    return EPS_INT_FACTOR * dt * worst + EPS_INT_FLOOR


def check_monotone(columns, rows, dt=None):
    """Nonincreasing check for ymh, sup_theta and every hym column.

    With dt known the slack is the integrator-drift budget; standalone it
    falls back to a 1e-6 relative slack.  Returns a list of violations
    (column, row index, increase)."""
    targets = ["ymh", "sup_theta"] + [c for c in columns if c.startswith("hym_")]
    violations = []
    for col in targets:
        series = [(r["t"], r[col]) for r in rows]
        if dt is not None:
            slack = eps_int(series, dt)
        else:
            finite = [abs(v) for _, v in series if np.isfinite(v)]
            slack = 1e-6 * max(finite, default=0.0) + EPS_INT_FLOOR
        for k in range(1, len(series)):
            v0, v1 = series[k - 1][1], series[k][1]
            if np.isfinite(v0) and np.isfinite(v1) and v1 > v0 + slack:
                violations.append((col, k, v1 - v0))
    return violations


def run_checks(result, cfg, oracle_type, graded_report):
    """Run-level verification table; every check records pass/fail/skip."""
    rows = result.rows
    dt = cfg.params.dt(cfg.grid)
    checks = {}

    target = None
    if oracle_type is not None:
        target = oracle_type.as_floats()
    elif cfg.expect_type is not None:
        target = np.asarray(cfg.expect_type, dtype=float)
    if target is not None:
        dev = float(np.max(np.abs(result.lambda_vec - target)))
        checks["type_match"] = ("pass" if dev <= TYPE_TOL else "fail",
                                f"max|lambda - target| = {dev:.4f}")
        checks["spatial_dev"] = (
            "pass" if result.spatial_dev <= TYPE_TOL else "fail",
            f"spatial_dev = {result.spatial_dev:.4f}")
    else:
        checks["type_match"] = ("skip", "no oracle and no [expect] type")
        checks["spatial_dev"] = (
            "pass" if result.spatial_dev <= TYPE_TOL else "fail",
            f"spatial_dev = {result.spatial_dev:.4f}")

    if oracle_type is not None:
        mu = oracle_type.as_floats()
        bad = []
        for k, row in enumerate(rows):
            est = np.array([row[f"lambda_{i+1}"] for i in range(cfg.bundle.rank)])
            if not hn.partial_sum_dominates(est, mu, DOMINANCE_TOL):
                bad.append(k)
        checks["dominance"] = (("pass", "partial sums dominate oracle at every "
                                f"snapshot ({len(rows)} rows)") if not bad
                               else ("fail", f"violated at rows {bad[:5]}"))
    else:
        checks["dominance"] = ("skip", "no oracle type")

    violations = check_monotone(result.columns, rows, dt=dt)
    checks["monotone"] = (("pass", "ymh, sup_theta, hym_* nonincreasing")
                          if not violations else
                          ("fail", f"{violations[:3]}"))

    i0 = max(result.i_initial, IFUNC_FLOOR)
    budget = max(cfg.params.stop_tolerance, IFUNC_DROP * i0)
    checks["i_func"] = (("pass" if result.i_final < budget else "fail"),
                        f"I: {result.i_initial:.3e} -> {result.i_final:.3e} "
                        f"(budget {budget:.3e})")

    phi0 = rows[0]["sup_phi_sq"]
    worst = max(r["sup_phi_sq"] for r in rows)
    checks["higgs_c0"] = (("pass" if worst <= PHI_SUP_GROWTH * phi0 + 1e-12
                           else "fail"),
                          f"sup|phi|^2: initial {phi0:.4f}, max {worst:.4f}")

    if np.isfinite(result.acd_initial):
        if result.acd_initial > 1e-6:
            ok = result.acd_final < ACD_DROP * result.acd_initial
            checks["acd"] = (("pass" if ok else "fail"),
                             f"acd: {result.acd_initial:.3e} -> "
                             f"{result.acd_final:.3e}")
        else:
            ok = result.acd_final < 1e-6
            checks["acd"] = (("pass" if ok else "fail"),
                             f"acd stays critical: {result.acd_final:.3e}")
    else:
        checks["acd"] = ("skip", "no oracle filtration")

    mins = min(r["min_eig_h"] for r in rows)
    checks["positivity"] = (("pass" if mins > 0 else "fail"),
                            f"min site eigenvalue of h = {mins:.3e}")

    if graded_report is not None:
        st = graded_report["status"]
        checks["graded_splitting"] = (
            "pass" if st == "pass" else ("skip" if st == "indeterminate" else "fail"),
            f"spectral projections: {st}")
    else:
        checks["graded_splitting"] = ("skip", "single cluster or no oracle")
    return checks


# -- report -------------------------------------------------------------------

def format_report(cfg, result, oracle_type, oracle_filt, checks, graded_report):
    lines = []
    lines.append("flow run report")
    lines.append(f"config: {cfg.path}")
    lines.append(f"grid n = {cfg.grid.n}, degrees = {cfg.bundle.degrees}, "
                 f"rank = {cfg.bundle.rank}")
    lines.append(f"status: {result.status} at t = {result.rows[-1]['t']:.6g} "
                 f"({len(result.rows)} snapshots)")
    est = ", ".join(f"{v:+.4f}" for v in result.lambda_vec)
    lines.append(f"limit type estimate: ({est})  spatial_dev = "
                 f"{result.spatial_dev:.2e}")
    if oracle_type is not None:
        mu = ", ".join(f"{float(m):+.4f}" for m in oracle_type.mu)
        lines.append(f"oracle HN type:      ({mu})")
        verdict = hn.dominance_compare(
            oracle_type.as_floats(), result.lambda_vec, tol=5 * TYPE_TOL)
        lines.append(f"dominance verdict (oracle vs estimate): {verdict}")
        ranks = [s.rank for s in oracle_filt.steps]
        degs = [int(s.degree) for s in oracle_filt.steps]
        lines.append(f"oracle filtration ranks {ranks}, degrees {degs}")
    else:
        lines.append("oracle HN type:      unsupported configuration")
    if cfg.expect_type is not None:
        lines.append(f"expected type (regression pin): {cfg.expect_type}")
    lines.append("")
    lines.append("checks:")
    for name, (status, detail) in checks.items():
        lines.append(f"  {name:18s} {status:4s}  {detail}")
    if graded_report is not None:
        lines.append("")
        lines.append("graded splitting clusters:")
        for c in graded_report.get("clusters", []):
            lines.append(f"  slope {c['slope']:+.3f} rank {c['rank']}: measured "
                         f"{c['measured']:+.4f}, residuals "
                         f"({c['r1']:.2e}, {c['r2']:.2e}, {c['r3']:.2e})")
    lines.append("")
    lines.append("[values]")
    kv = {
        "status": result.status,
        "t_final": repr(result.rows[-1]["t"]),
        "lambda": ",".join(repr(float(v)) for v in result.lambda_vec),
        "spatial_dev": repr(result.spatial_dev),
        "i_initial": repr(result.i_initial),
        "i_final": repr(result.i_final),
        "acd_initial": repr(result.acd_initial),
        "acd_final": repr(result.acd_final),
        "passed": repr(all(s != "fail" for s, _ in checks.values())),
    }
    if oracle_type is not None:
        kv["oracle_type"] = ",".join(str(m) for m in oracle_type.mu)
    for k, v in kv.items():
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


@dataclass
class ExperimentResult:
    cfg: ExperimentConfig
    result: object
    oracle_type: object
    checks: dict
    passed: bool
    report_text: str
    graded: dict = dc_field(default=None)


def run_experiment(cfg, write_outputs=True):
    """Execute a config end to end; returns the result bundle with checks."""
    background = build_background(cfg.bundle, cfg.grid)
    higgs = build_higgs(cfg.bundle, background, holo_tol=cfg.holo_tol)

    oracle_type, oracle_filt, filtration = None, None, None
    try:
        oracle_type, oracle_filt = hn.oracle_hn_type(cfg.bundle)
        filtration = (oracle_filt.spans(),
                      [float(m) for m in oracle_filt.quotient_slopes()])
    except OracleUnsupportedError:
        pass

    def dump(state):
        if write_outputs:
            snapshotio.save_snapshot(cfg.snapshot_path + ".abort", state)

    result = run(cfg.bundle, cfg.params, cfg.grid, higgs, background,
                 hym_pairs=cfg.hym_pairs, filtration=filtration, lp=cfg.lp,
                 abort_dump=dump)

    graded = None
    if oracle_type is not None and len(oracle_type.clusters()) > 1:
        graded = hn.seshadri_graded_check(cfg.bundle, result.final_state,
                                          higgs, background)
    checks = run_checks(result, cfg, oracle_type, graded)
    report_text = format_report(cfg, result, oracle_type, oracle_filt, checks,
                                graded)
    if write_outputs:
        write_csv(cfg.csv_path, result.columns, result.rows)
        os.makedirs(os.path.dirname(os.path.abspath(cfg.snapshot_path)),
                    exist_ok=True)
        snapshotio.save_snapshot(cfg.snapshot_path, result.final_state)
        os.makedirs(os.path.dirname(os.path.abspath(cfg.report_path)),
                    exist_ok=True)
        with open(cfg.report_path, "w") as fh:
            fh.write(report_text)
    passed = all(status != "fail" for status, _ in checks.values())
    return ExperimentResult(cfg, result, oracle_type, checks, passed,
                            report_text, graded)
