"""Harness tests: config parsing, CSV/snapshot round-trips, report checks,
determinism, CLI exit codes."""

import os
import shutil
import subprocess
import sys
import numpy as np
import pytest

from ymhlab import harness, snapshotio
from ymhlab.bundle import MetricState
from ymhlab.geometry import TorusGrid
from ymhlab.errors import ConfigurationError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def write_config(tmp_path, name="exp.ini", **overrides):
    body = {
        "geometry": {"n": 16},
        "bundle": {"degrees": "0, 0", "blocks": "\n1,2,constant,1.0"},
        "flow": {"t_max": 3.2, "dt_safety": 0.25, "stop_tolerance": 1.3e-4,
                 "snapshot_interval": 0.1},
        "functionals": {"hym_pairs": "(1,0);(2,0);(4,3)",
                        "lp_for_critical": 2},
        "output": {},
        "expect": {"type": "0, 0"},
    }
    for sec, kv in overrides.items():
        body.setdefault(sec, {}).update(kv)
    lines = []
    for sec, kv in body.items():
        if not kv:
            continue
        lines.append(f"[{sec}]")
        for k, v in kv.items():
            lines.append(f"{k} = {str(v).replace(chr(10), chr(10) + '    ')}")
        lines.append("")
    path = tmp_path / name
    path.write_text("\n".join(lines))
    return str(path)


def test_load_config_roundtrip(tmp_path):
    path = write_config(tmp_path)
    cfg = harness.load_config(path)
    assert cfg.grid.n == 16
    assert cfg.bundle.degrees == (0, 0)
    assert len(cfg.bundle.higgs_blocks) == 1
    assert cfg.hym_pairs == ((1, 0), (2, 0), (4, 3))
    assert cfg.csv_path.endswith("exp.csv")
    assert cfg.expect_type == (0.0, 0.0)


def test_load_config_rejects_bad_block(tmp_path):
    path = write_config(tmp_path, bundle={"degrees": "0, 1",
                                          "blocks": "\n1,2,solved"})
    with pytest.raises(ConfigurationError, match=r"\(1,2\)"):
        harness.load_config(path)


def test_load_config_parse_errors(tmp_path):
    path = write_config(tmp_path, geometry={"n": "not_a_number"})
    with pytest.raises(ConfigurationError, match="geometry"):
        harness.load_config(path)
    path2 = tmp_path / "broken.ini"
    path2.write_text("[geometry\nn = 8\n")
    with pytest.raises(ConfigurationError, match="parse"):
        harness.load_config(str(path2))
    path3 = write_config(tmp_path, name="badpair.ini",
                         functionals={"hym_pairs": "(0.5,0)"})
    with pytest.raises(ConfigurationError, match="alpha"):
        harness.load_config(path3)


def test_snapshot_roundtrip_bit_exact(tmp_path):
    grid = TorusGrid(8)
    rng = np.random.default_rng(1)
    h = rng.standard_normal((8, 8, 2, 2)) + 1j * rng.standard_normal((8, 8, 2, 2))
    st = MetricState(0.372, h)
    path = str(tmp_path / "s.snap")
    snapshotio.save_snapshot(path, st)
    st2 = snapshotio.load_snapshot(path)
    assert st2.t == st.t
    assert st2.h.tobytes() == st.h.astype("<c16").tobytes()
    # header guards
    with open(path, "r+b") as fh:
        fh.write(b"XXXX")
    with pytest.raises(ConfigurationError, match="magic"):
        snapshotio.load_snapshot(path)


def test_csv_roundtrip_and_schema(tmp_path):
    cols = ["t", "ymh", "i_func", "sup_theta", "sup_phi_sq", "min_eig_h",
            "trace_heat_res", "acd_p", "hym_1_0", "lambda_1", "spatial_dev"]
    rows = [{c: float(i + k) for k, c in enumerate(cols)} for i in range(3)]
    rows[0]["trace_heat_res"] = float("nan")
    path = str(tmp_path / "x.csv")
    harness.write_csv(path, cols, rows)
    cols2, rows2 = harness.read_csv(path)
    assert cols2 == cols
    assert rows2[1]["ymh"] == rows[1]["ymh"]
    assert np.isnan(rows2[0]["trace_heat_res"])
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ConfigurationError, match="no rows"):
        harness.read_csv(str(empty))
    header_only = tmp_path / "h.csv"
    header_only.write_text(",".join(cols) + "\n")
    with pytest.raises(ConfigurationError, match="no rows"):
        harness.read_csv(str(header_only))


def test_monotone_checker_catches_injected_uptick():
    cols = ["t", "ymh", "sup_theta", "hym_1_0"]
    rows = [{"t": 0.1 * k, "ymh": 10.0 - k, "sup_theta": 5.0,
             "hym_1_0": 2.0} for k in range(5)]
    assert harness.check_monotone(cols, rows, dt=1e-4) == []
    rows[3]["ymh"] = 11.0
    v = harness.check_monotone(cols, rows, dt=1e-4)
    assert v and v[0][0] == "ymh" and v[0][1] == 3


def test_run_experiment_end_to_end(tmp_path):
    path = write_config(tmp_path)
    cfg = harness.load_config(path)
    res = harness.run_experiment(cfg)
    assert res.passed, res.checks
    assert os.path.exists(cfg.csv_path)
    assert os.path.exists(cfg.snapshot_path)
    assert os.path.exists(cfg.report_path)
    cols, rows = harness.read_csv(cfg.csv_path)
    assert cols[:8] == ["t", "ymh", "i_func", "sup_theta", "sup_phi_sq",
                        "min_eig_h", "trace_heat_res", "acd_p"]
    assert cols[8:] == ["hym_1_0", "hym_2_0", "hym_4_3",
                        "lambda_1", "lambda_2", "spatial_dev"]
    st = snapshotio.load_snapshot(cfg.snapshot_path)
    assert st.h.shape == (16, 16, 2, 2)
    text = open(cfg.report_path).read()
    assert "status:" in text and "passed=True" in text


def test_determinism_bit_identical(tmp_path):
    p1 = write_config(tmp_path, name="a.ini")
    p2 = write_config(tmp_path, name="b.ini")
    for p in (p1, p2):
        harness.run_experiment(harness.load_config(p))
    c1 = open(str(tmp_path / "a.csv"), "rb").read()
    c2 = open(str(tmp_path / "b.csv"), "rb").read()
    assert c1 == c2
    s1 = open(str(tmp_path / "a.snap"), "rb").read()
    s2 = open(str(tmp_path / "b.snap"), "rb").read()
    assert s1 == s2


def _cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "ymhlab.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def test_cli_run_and_report(tmp_path):
    path = write_config(tmp_path)
    r = _cli("run", path, "--no-figures")
    assert r.returncode == 0, r.stderr + r.stdout
    assert "checks:" in r.stdout
    csv_path = str(tmp_path / "exp.csv")
    r2 = _cli("report", csv_path, "--no-figures", "--config", path)
    assert r2.returncode == 0, r2.stderr + r2.stdout

    # inject an uptick beyond the slack: exit 1 naming the row
    lines = open(csv_path).read().splitlines()
    cols = lines[0].split(",")
    k = cols.index("ymh")
    vals = lines[2].split(",")
    vals[k] = repr(float(vals[k]) + 1.0)
    lines[2] = ",".join(vals)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    r3 = _cli("report", str(bad), "--no-figures")
    assert r3.returncode == 1
    assert "row 1" in r3.stderr and "ymh" in r3.stderr

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    r4 = _cli("report", str(empty), "--no-figures")
    assert r4.returncode == 2
    assert "no rows" in r4.stderr


def test_cli_rejects_illegal_block(tmp_path):
    path = write_config(tmp_path, bundle={"degrees": "0, 1",
                                          "blocks": "\n1,2,solved"})
    r = _cli("run", path, "--no-figures")
    assert r.returncode == 2
    assert "(1,2)" in r.stderr


def test_cli_report_figures(tmp_path):
    path = write_config(tmp_path)
    _cli("run", path, "--no-figures")
    csv_path = str(tmp_path / "exp.csv")
    r = _cli("report", csv_path)
    assert r.returncode == 0
    for suffix in ("_monotone.png", "_type.png", "_diagnostics.png"):
        assert os.path.exists(str(tmp_path / ("exp" + suffix))), suffix


def test_cli_refine_levels_guard(tmp_path):
    src = os.path.join(CONFIG_DIR, "refine_triple.ini")
    dst = tmp_path / "refine.ini"
    shutil.copy(src, dst)
    r = _cli("refine", str(dst), "--levels", "1", "--no-figures")
    assert r.returncode == 2
