"""Integrator tests: fixed points, conservation, gauge-orbit equivalence."""

import numpy as np
import pytest

from ymhlab.geometry import TorusGrid
from ymhlab.bundle import (BundleConfig, HiggsBlock, build_background,
                           build_higgs, MetricState)
from ymhlab import flow as fl
from ymhlab import functionals as fn
from ymhlab import la
from ymhlab.errors import StateCorruptionError
from test_bundle import random_positive_h


def make(config, n=16, **blocks):
    grid = TorusGrid(n)
    bg = build_background(config, grid)
    hf = build_higgs(config, bg) if config.higgs_blocks else None
    return grid, bg, hf


def test_trivial_fixed_point():
    cfg = BundleConfig((0,))
    grid, bg, hf = make(cfg, n=8)
    params = fl.FlowParams(t_max=1.0, snapshot_interval=0.1)
    st = MetricState.identity(grid, 1)
    stepper = fl.Stepper(bg, hf, params.resolve_lambda(cfg))
    h = st.h.copy()
    for _ in range(5):
        h = stepper.step(h, params.dt(grid))
    assert np.max(np.abs(h - st.h)) < 1e-14


def test_split_trace_flow_identity():
    # deg 0, lambda 0: integral of tr log h stays zero along the flow
    cfg = BundleConfig((1, -1))
    grid, bg, hf = make(cfg, n=16)
    params = fl.FlowParams(t_max=1.0, dt_safety=0.25, snapshot_interval=0.1)
    stepper = fl.Stepper(bg, hf, params.resolve_lambda(cfg))
    h = MetricState.identity(grid, 2).h
    for _ in range(50):
        h = stepper.step(h, params.dt(grid))
    w = np.linalg.eigvalsh(la.herm(h))
    tr_log = grid.integrate(np.sum(np.log(w), axis=-1))
    assert abs(tr_log) < 1e-10
    # h moved (the factors drift in opposite directions) but K stayed put
    assert np.max(np.abs(h - MetricState.identity(grid, 2).h)) > 1e-4
    K = fn.metric_curvature_coeff(MetricState(0.0, h), hf, bg)
    assert np.max(np.abs(K[..., 0, 0] - 2 * np.pi)) < 1e-9


def test_fastpath_matches_reference():
    for degrees, blocks in (((1, -1), ()),
                            ((0, 0), (HiggsBlock(0, 1, "constant", 1.0),)),
                            ((1, 0, -1), (HiggsBlock(0, 1, "solved", seed=3),))):
        cfg = BundleConfig(degrees, blocks)
        grid, bg, hf = make(cfg, n=16)
        lam = 2 * np.pi * cfg.total_degree / cfg.rank
        h = random_positive_h(grid, cfg.rank, seed=17, amp=0.2)
        fast = fl.Stepper(bg, hf, lam, use_numba=True)
        out = np.empty_like(h)
        fast.rhs(h, out)
        ref = fl.rhs_reference(h, hf, bg, lam)
        scale = np.max(np.abs(ref)) + 1.0
        assert np.max(np.abs(out - ref)) < 1e-11 * scale


def test_energy_decreases_nilpotent():
    cfg = BundleConfig((0, 0), (HiggsBlock(0, 1, "constant", 1.0),))
    grid, bg, hf = make(cfg, n=16)
    params = fl.FlowParams(t_max=1.0, dt_safety=0.25, snapshot_interval=0.1)
    stepper = fl.Stepper(bg, hf, 0.0)
    h = MetricState.identity(grid, 2).h
    energies = [fn.ymh(MetricState(0.0, h), hf, bg)]
    for k in range(60):
        h = stepper.step(h, params.dt(grid))
        if k % 20 == 19:
            energies.append(fn.ymh(MetricState(0.0, h), hf, bg))
    assert all(e1 <= e0 + 1e-12 for e0, e1 in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]


def test_positivity_abort():
    # dt_safety = 1 exceeds the RK4 diffusion stability bound; a rough
    # perturbation must blow up and be caught, not silently continue
    cfg = BundleConfig((0,))
    grid, bg, hf = make(cfg, n=8)
    params = fl.FlowParams(t_max=1.0, dt_safety=1.0, snapshot_interval=0.1)
    rng = np.random.default_rng(0)
    u = 0.5 * rng.standard_normal((8, 8))
    h = np.exp(u)[..., None, None].astype(complex)
    stepper = fl.Stepper(bg, hf, 0.0)
    with pytest.raises(StateCorruptionError):
        for _ in range(500):
            h = stepper.step(h, params.dt(grid))


def test_reconstruct_pair_basics():
    cfg = BundleConfig((1, -1))
    grid, bg, hf = make(cfg, n=16)
    st = MetricState.identity(grid, 2)
    gs = fl.reconstruct_pair(st, None, bg)
    assert np.max(np.abs(gs.g - st.h)) < 1e-14      # g = Id
    assert np.max(np.abs(gs.pair.a01)) < 1e-14
    h = np.zeros_like(st.h)
    h[..., 0, 0] = 4.0
    h[..., 1, 1] = 1.0
    gs = fl.reconstruct_pair(MetricState(0.0, h), None, bg)
    assert np.max(np.abs(gs.g[..., 0, 0] - 2.0)) < 1e-12
    assert np.max(np.abs(gs.g[..., 1, 1] - 1.0)) < 1e-12


def test_pair_frame_spectrum_identity():
    # the two discrete curvature routes (metric h-route vs reconstructed
    # pair route) agree pointwise at O(a^2) on flow-generated metrics,
    # which are covariantly smooth by construction
    cfg = BundleConfig((1, 0, -1), (HiggsBlock(0, 1, "solved", seed=3),))
    t_target = 0.03
    defects = []
    for n in (16, 32):
        grid = TorusGrid(n)
        bg = build_background(cfg, grid)
        hf = build_higgs(cfg, bg)
        params = fl.FlowParams(t_max=1.0, dt_safety=0.25, snapshot_interval=0.1)
        stepper = fl.Stepper(bg, hf, 0.0)
        dt = params.dt(grid)
        h = MetricState.identity(grid, 3).h
        for _ in range(int(round(t_target / dt))):
            h = stepper.step(h, dt)
        st = MetricState(t_target, h)
        gs = fl.reconstruct_pair(st, hf, bg)
        K_pair = la.herm(fl.pair_curvature_K(gs.pair, bg))
        ev_pair = la.eigvalsh_desc(K_pair / (2 * np.pi))
        ev_metric = fn.mean_curvature(st, hf, bg, frame="pair").eigenvalues()
        defects.append(np.max(np.abs(ev_pair - ev_metric)))
        # the stored-frame spectra agree to rounding at every site
        Sm = fn.mean_curvature(st, hf, bg, frame="metric")
        assert np.max(np.abs(ev_metric - Sm.eigenvalues())) < 1e-9
    assert defects[0] < 0.05
    assert defects[1] < 0.35 * defects[0]


def test_pair_flow_stationary_at_critical():
    cfg = BundleConfig((1, -1))
    grid, bg, hf = make(cfg, n=16)
    st = MetricState.identity(grid, 2)
    gs = fl.reconstruct_pair(st, None, bg)
    params = fl.FlowParams(t_max=1.0, dt_safety=0.25, snapshot_interval=0.1)
    ps = gs.pair
    for _ in range(5):
        ps = fl.step_pair_flow_direct(ps, bg, params)
    assert np.max(np.abs(ps.a01)) < 1e-10
    assert np.max(np.abs(ps.Phi)) < 1e-10


def test_pair_flow_phi_frozen_when_commuting():
    # [theta, phi] = 0: diagonal phi on the trivial rank-2 bundle
    cfg = BundleConfig((0, 0), (HiggsBlock(0, 0, "constant", 0.5),
                                HiggsBlock(1, 1, "constant", -0.5)))
    grid, bg, hf = make(cfg, n=8)
    gs = fl.reconstruct_pair(MetricState.identity(grid, 2), hf, bg)
    params = fl.FlowParams(t_max=1.0, snapshot_interval=0.1)
    ps = gs.pair
    phi0 = ps.Phi.copy()
    for _ in range(10):
        ps = fl.step_pair_flow_direct(ps, bg, params)
    assert np.max(np.abs(ps.Phi - phi0)) < 1e-10


def test_two_path_short_time_agreement():
    # metric flow vs direct pair flow from identical initial data
    cfg = BundleConfig((0, 0), (HiggsBlock(0, 1, "constant", 1.0),))
    grid, bg, hf = make(cfg, n=16)
    params = fl.FlowParams(t_max=0.1, dt_safety=0.25, snapshot_interval=0.02)
    lam = params.resolve_lambda(cfg)
    stepper = fl.Stepper(bg, hf, lam)
    dt = params.dt(grid)
    steps = int(round(0.1 / dt))
    h = MetricState.identity(grid, 2).h
    ps = fl.reconstruct_pair(MetricState.identity(grid, 2), hf, bg).pair
    for _ in range(steps):
        h = stepper.step(h, dt)
        ps = fl.step_pair_flow_direct(ps, bg, params)
    pd = fn.pair_frame(MetricState(steps * dt, h), hf, bg)
    m_scal = {
        "ymh": fn.ymh_from_pair(pd),
        "eig_mean": np.mean(la.eigvalsh_desc(la.herm(pd.S)), axis=(0, 1)),
    }
    p_scal = fl.pair_scalars(ps, bg)
    assert m_scal["ymh"] == pytest.approx(p_scal["ymh"], rel=0.02)
    assert np.max(np.abs(m_scal["eig_mean"] - p_scal["eig_mean"])) < 0.02


def test_run_immediate_convergence():
    cfg = BundleConfig((0,))
    grid, bg, hf = make(cfg, n=8)
    params = fl.FlowParams(t_max=1.0, stop_tolerance=1e-8,
                           snapshot_interval=0.1)
    res = fl.run(cfg, params, grid, hf, bg)
    assert res.status == "converged"
    assert len(res.rows) == 1 and res.rows[0]["t"] == 0.0
    assert res.lambda_vec == pytest.approx([0.0], abs=1e-12)

    cfg2 = BundleConfig((1, -1))
    grid2, bg2, hf2 = make(cfg2, n=16)
    res2 = fl.run(cfg2, params, grid2, hf2, bg2)
    assert res2.status == "converged"
    assert res2.lambda_vec == pytest.approx([1.0, -1.0], abs=1e-9)
    assert res2.spatial_dev < 1e-9


def test_run_nilpotent_monotone_columns():
    cfg = BundleConfig((0, 0), (HiggsBlock(0, 1, "constant", 1.0),))
    grid, bg, hf = make(cfg, n=16)
    params = fl.FlowParams(t_max=0.5, dt_safety=0.25, stop_tolerance=1e-12,
                           snapshot_interval=0.05)
    res = fl.run(cfg, params, grid, hf, bg,
                 filtration=([np.eye(2, dtype=complex)], [0.0]))
    assert res.status == "max-time"
    for col in ("ymh", "sup_theta", "hym_1_0", "hym_2_0", "hym_4_3"):
        vals = [r[col] for r in res.rows]
        assert all(v1 <= v0 + 1e-9 for v0, v1 in zip(vals, vals[1:])), col
    i_vals = [r["i_func"] for r in res.rows]
    assert i_vals[-1] < i_vals[0]
    assert all(r["min_eig_h"] > 0 for r in res.rows)
    # analytic check: r(t) = 1/(1+8t), S_00 = r/pi
    t_end = res.rows[-1]["t"]
    expect = 1.0 / (1 + 8 * t_end) / np.pi
    assert res.lambda_vec[0] == pytest.approx(expect, rel=1e-3)
