"""Report figures rendered alongside the delimited output."""

import os
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _series(rows, col):
    t = np.array([r["t"] for r in rows])
    v = np.array([r[col] for r in rows])
    keep = np.isfinite(v)
    return t[keep], v[keep]


def render_report_figures(columns, rows, out_prefix):
    """Write the standard three figures next to the CSV; returns the paths."""
    written = []
    hym_cols = [c for c in columns if c.startswith("hym_")]
    lam_cols = [c for c in columns if c.startswith("lambda_")]

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for col in ["ymh", "sup_theta"] + hym_cols:
        t, v = _series(rows, col)
        if len(t):
            ax.plot(t, v, label=col, lw=1.4)
    ax.set_xlabel("t")
    ax.set_ylabel("monotone quantities")
    if all(np.all(_series(rows, c)[1] > 0) for c in ["ymh"] if len(rows) > 1):
        ax.set_yscale("log")
    ax.legend(fontsize=8, ncol=2)
    ax.set_title("energy and mean-curvature norms")
    path = out_prefix + "_monotone.png"
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for col in lam_cols:
        t, v = _series(rows, col)
        ax.plot(t, v, label=col, lw=1.4)
    ax.set_xlabel("t")
    ax.set_ylabel("eigenvalue spatial means")
    ax.legend(fontsize=8)
    ax.set_title("limit type trajectories")
    path = out_prefix + "_type.png"
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for col, style in (("i_func", "-"), ("acd_p", "--"), ("trace_heat_res", ":")):
        t, v = _series(rows, col)
        if len(t) and np.any(v > 0):
            ax.semilogy(t, np.maximum(v, 1e-300), style, label=col, lw=1.4)
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("convergence diagnostics")
    path = out_prefix + "_diagnostics.png"
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    written.append(path)
    return written


def render_refine_figure(report, out_path):
    """Observed error vs grid size for the refinement battery."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ns = np.array(report["levels"], dtype=float)
    for key in ("dbar_errors", "del_errors", "trace_heat_residuals"):
        errs = np.maximum(np.array(report[key], dtype=float), 1e-300)
        ax.loglog(ns, errs, "o-", label=key.replace("_", " "))
    ref = report["dbar_errors"][0] * (ns / ns[0]) ** -2.0
    ax.loglog(ns, ref, "k--", lw=0.8, label="order 2")
    ax.set_xlabel("n")
    ax.set_ylabel("error")
    ax.legend(fontsize=8)
    ax.set_title("refinement study")
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)
    return out_path
