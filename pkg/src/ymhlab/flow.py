"""Time integration of the metric heat flow and the direct pair flow.

Primary integrator: classical RK4 on  dh/dt = -2 h (K - lambda),  where
K = sqrt(-1) Lambda (F_H + [phi, phi^{*H}]) is the (symmetrized) metric-frame
contraction.  The step is followed by re-Hermitization and a positivity
check; positivity loss aborts with a state dump rather than continuing on a
corrupted configuration.

The direct pair flow evolves (A, phi) by

    da/dt   = dbar_A K,        dPhi/dt = -[K, Phi],

with a the (0,1) connection deviation; it exists solely to certify, over a
short time window, that gauge-invariant scalars agree with the metric-flow
path (gauge-orbit equivalence of the two formulations).
"""

import collections
import numpy as np
from dataclasses import dataclass, field as dc_field

from . import geometry as geo
from . import la
from . import functionals as fn
from .bundle import MetricState
from .constants import COMPLEX
from .errors import ConfigurationError, StateCorruptionError
from . import fastpath as fp


@dataclass
class FlowParams:
    t_max: float
    dt_safety: float = 0.2
    stop_tolerance: float = 1e-8
    snapshot_interval: float = 0.05
    lam: float = None          # Hermitian-Einstein constant 2*pi*deg/rank

    def __post_init__(self):
        if not (0.0 < self.dt_safety <= 1.0):
            raise ConfigurationError("dt_safety must lie in (0, 1]")
        if self.t_max < 0 or self.snapshot_interval <= 0:
            raise ConfigurationError("t_max >= 0 and snapshot_interval > 0 required")

    def resolve_lambda(self, config):
        lam = 2.0 * np.pi * config.total_degree / config.rank
        if self.lam is None:
            return lam
        if abs(self.lam - lam) > 1e-9 * (1 + abs(lam)):
            raise ConfigurationError(
                f"lambda {self.lam} inconsistent with degrees (expect {lam})")
        return self.lam

    def dt(self, grid):
        return self.dt_safety * grid.spacing ** 2


class Stepper:
    """RK4 stepper over preallocated buffers; numba kernels when available."""

    def __init__(self, background, higgs, lam, use_numba=None):
        self.background = background
        self.higgs = higgs
        self.lam = float(lam)
        self.grid = background.grid
        n = self.grid.n
        R = background.config.rank
        W = background.links
        self.Wx = np.ascontiguousarray(W.Wx, dtype=COMPLEX)
        self.Wy = np.ascontiguousarray(W.Wy, dtype=COMPLEX)
        self.F0c = np.ascontiguousarray(background.F0c, dtype=COMPLEX)
        if higgs is not None and not higgs.is_zero():
            self.Phi = np.ascontiguousarray(higgs.Phi, dtype=COMPLEX)
            self.has_higgs = True
        else:
            self.Phi = np.zeros((n, n, R, R), dtype=COMPLEX)
            self.has_higgs = False
        self.PhiDag = np.ascontiguousarray(la.dagger(self.Phi))
        self.use_numba = fp.HAVE_NUMBA if use_numba is None else use_numba
        shape = (n, n, R, R)
        self._hinv = np.empty(shape, dtype=COMPLEX)
        self._p1 = np.empty(shape, dtype=COMPLEX)
        self._p2 = np.empty(shape, dtype=COMPLEX)
        self._k = [np.empty(shape, dtype=COMPLEX) for _ in range(4)]
        self._tmp = np.empty(shape, dtype=COMPLEX)

    def rhs(self, h, out):
        if self.use_numba:
            fp._rhs(h, self.Wx, self.Wy, self.F0c, self.Phi, self.PhiDag,
                    self.has_higgs, self.lam, self.grid.spacing,
                    self._hinv, self._p1, self._p2, out)
        else:
            out[...] = rhs_reference(h, self.higgs if self.has_higgs else None,
                                     self.background, self.lam)

    def step(self, h, dt):
        """One RK4 step; returns the new h. Raises on positivity loss."""
        k1, k2, k3, k4 = self._k
        tmp = self._tmp
        self.rhs(h, k1)
        if self.use_numba:
            fp._axpy(h, k1, 0.5 * dt, tmp)
            self.rhs(tmp, k2)
            fp._axpy(h, k2, 0.5 * dt, tmp)
            self.rhs(tmp, k3)
            fp._axpy(h, k3, dt, tmp)
            self.rhs(tmp, k4)
            out = np.empty_like(h)
            fp._rk4_combine(h, k1, k2, k3, k4, dt, out)
            worst = fp._rehermitize_and_check(out)
            if worst <= 0.0:
                raise StateCorruptionError(
                    "metric lost positivity during step (dt too large or "
                    "corrupted configuration)")
        else:
            np.add(h, 0.5 * dt * k1, out=tmp)
            self.rhs(tmp, k2)
            np.add(h, 0.5 * dt * k2, out=tmp)
            self.rhs(tmp, k3)
            np.add(h, dt * k3, out=tmp)
            self.rhs(tmp, k4)
            out = h + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            out = la.herm(out)
            if not np.all(np.isfinite(out)) or la.min_eig_h(out) <= 0.0:
                raise StateCorruptionError(
                    "metric lost positivity during step (dt too large or "
                    "corrupted configuration)")
        return out


def rhs_reference(h, higgs, background, lam):
    """Pure numpy RHS, identical semantics to the fused kernel."""
    K = fn.metric_curvature_coeff(MetricState(0.0, h), higgs, background)
    return -2.0 * (h @ K) + 2.0 * lam * h


def step_metric_flow(state, higgs, background, params, stepper=None):
    """Advance the metric state by one RK4 step of size dt_safety * a^2."""
    if stepper is None:
        stepper = Stepper(background, higgs, params.resolve_lambda(background.config))
    dt = params.dt(background.grid)
    h = stepper.step(state.h, dt)
    return MetricState(state.t + dt, h)


# -- gauge-orbit reconstruction and the direct pair flow ---------------------

@dataclass
class PairState:
    """Direct discretization of the evolved pair: (0,1) deviation and Higgs."""
    t: float
    a01: np.ndarray
    Phi: np.ndarray


@dataclass
class GaugeState:
    """g = h^{1/2} (Hermitian positive polar representative) and the pair."""
    g: np.ndarray
    pair: PairState


def reconstruct_pair(state, higgs, background):
    """Pair (A(t), phi(t)) = g (A0, phi0) with g the Hermitian square root of h."""
    g, ginv = la.sqrtm_psd(la.herm(state.h))
    dev = float(np.max(np.abs(g @ g - state.h)))
    if dev > 1e-10 * (1.0 + float(np.max(np.abs(state.h)))):
        raise StateCorruptionError(f"g*g != h: defect {dev:.3e}")
    W, a = background.links, background.grid.spacing
    a01 = -geo.dbar_c(g, W.Wx, W.Wy, a) @ ginv
    Phi0 = higgs.Phi if higgs is not None else np.zeros_like(state.h)
    return GaugeState(g, PairState(state.t, a01, g @ Phi0 @ ginv))


def pair_curvature_K(ps, background):
    """K = sqrt(-1) Lambda (F_A + [phi, phi*]) of the pair; exactly Hermitian."""
    W, a = background.links, background.grid.spacing
    adag = la.dagger(ps.a01)
    Fc = (background.F0c
          + geo.del_c(ps.a01, W.Wx, W.Wy, a)
          + geo.dbar_c(adag, W.Wx, W.Wy, a)
          + la.comm(ps.a01, adag))
    return 2.0 * (Fc + la.comm(ps.Phi, la.dagger(ps.Phi)))


def _pair_rhs(ps, background):
    W, a = background.links, background.grid.spacing
    K = pair_curvature_K(ps, background)
    da = geo.dbar_c(K, W.Wx, W.Wy, a) + la.comm(ps.a01, K)
    dPhi = -la.comm(K, ps.Phi)
    return da, dPhi


def step_pair_flow_direct(ps, background, params):
    """RK4 step of the direct (A, phi) flow; cross-check path only."""
    dt = params.dt(background.grid)
    k1a, k1p = _pair_rhs(ps, background)
    guard = float(np.max(np.abs(k1a))) * dt
    if not np.isfinite(guard) or guard > 10.0:
        raise StateCorruptionError("pair flow step exceeds stability bound (CFL)")
    s2 = PairState(ps.t, ps.a01 + 0.5 * dt * k1a, ps.Phi + 0.5 * dt * k1p)
    k2a, k2p = _pair_rhs(s2, background)
    s3 = PairState(ps.t, ps.a01 + 0.5 * dt * k2a, ps.Phi + 0.5 * dt * k2p)
    k3a, k3p = _pair_rhs(s3, background)
    s4 = PairState(ps.t, ps.a01 + dt * k3a, ps.Phi + dt * k3p)
    k4a, k4p = _pair_rhs(s4, background)
    return PairState(
        ps.t + dt,
        ps.a01 + (dt / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a),
        ps.Phi + (dt / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p))


def pair_scalars(ps, background):
    """Gauge-invariant scalars of a pair state: energy and theta spectrum."""
    grid = background.grid
    K = la.herm(pair_curvature_K(ps, background))
    S = K / (2 * np.pi)
    ev = la.eigvalsh_desc(S)
    return {
        "ymh": grid.integrate((2 * np.pi) ** 2 * la.frob2(S)),
        "eig_mean": np.mean(ev, axis=(0, 1)),
        "sup_theta": float(np.sqrt(np.max(la.frob2(S)))),
    }


# -- full run -----------------------------------------------------------------

CSV_FIXED_COLUMNS = ["t", "ymh", "i_func", "sup_theta", "sup_phi_sq",
                     "min_eig_h", "trace_heat_res", "acd_p"]


def hym_column_name(alpha, N):
    return f"hym_{alpha:g}_{N:g}"


def csv_columns(hym_pairs, rank):
    cols = list(CSV_FIXED_COLUMNS)
    cols += [hym_column_name(a, N) for a, N in hym_pairs]
    cols += [f"lambda_{i+1}" for i in range(rank)]
    cols.append("spatial_dev")
    return cols


@dataclass
class RunResult:
    status: str
    final_state: MetricState
    rows: list
    columns: list
    background: object
    higgs: object
    lambda_vec: np.ndarray
    spatial_dev: float
    i_initial: float
    i_final: float
    acd_initial: float
    acd_final: float
    final_pair: fn.PairData = dc_field(default=None)


def _psi_from_g(g, spans, slopes):
    psi = None
    prev = None
    for V, mu in zip(spans, slopes):
        U = g @ np.asarray(V, dtype=COMPLEX)
        gram = la.dagger(U) @ U
        pi = U @ la.inv_small(gram) @ la.dagger(U)
        if psi is None:
            psi = mu * pi
        else:
            psi = psi + mu * (pi - prev)
        prev = pi
    return psi


def run(config, params, grid, higgs, background, hym_pairs=((1, 0), (2, 0), (4, 3)),
        filtration=None, lp=2, abort_dump=None):
    """Integrate until t_max or I(t) < stop_tolerance; collect diagnostics rows.

    filtration: optional (spans, slopes) used for the approximate-critical
    distance column.  Non-convergence by t_max reports status "max-time".
    """
    lam = params.resolve_lambda(config)
    stepper = Stepper(background, higgs, lam)
    dt = params.dt(grid)
    steps_per_snap = max(1, int(round(params.snapshot_interval / dt)))
    state = MetricState.identity(grid, config.rank)
    rows = []
    columns = csv_columns(hym_pairs, config.rank)
    trace_hist = collections.deque(maxlen=3)
    one = np.ones((grid.n, grid.n), dtype=COMPLEX)

    def snapshot_row(state):
        pd = fn.pair_frame(state, higgs, background)
        S_h = la.herm(pd.S)
        ev = la.eigvalsh_desc(S_h)
        lam_vec = np.mean(ev, axis=(0, 1))
        row = {
            "t": state.t,
            "ymh": fn.ymh_from_pair(pd),
            "i_func": fn.i_functional_from_pair(pd, background),
            "sup_theta": fn.sup_theta_from_pair(pd),
            "sup_phi_sq": fn.sup_phi_sq_from_pair(pd),
            "min_eig_h": la.min_eig_h(state.h),
            "spatial_dev": float(np.max(np.abs(ev - lam_vec))),
        }
        # tr K is frame independent: tr(metric frame K) = 2*pi*tr(S_pair)
        trace_hist.append((state.t, 2 * np.pi * np.real(la.trace(S_h))))
        if len(trace_hist) == 3:
            (t0, f0), (t1, f1), (t2, f2) = trace_hist
            ddt = (f2 - f0) / (t2 - t0)
            lap = np.real(geo.laplacian_fb(f1.astype(COMPLEX), one, one,
                                           grid.spacing))
            row["trace_heat_res"] = float(np.sqrt(grid.integrate((ddt - lap) ** 2)))
        else:
            row["trace_heat_res"] = float("nan")
        if filtration is not None:
            spans, slopes = filtration
            psi = _psi_from_g(pd.g, spans, slopes)
            dev = np.sqrt(la.frob2(pd.S - psi))
            if np.isinf(lp):
                row["acd_p"] = float(np.max(dev))
            else:
                row["acd_p"] = float(grid.integrate(dev ** lp) ** (1.0 / lp))
        else:
            row["acd_p"] = float("nan")
        for alpha, N in hym_pairs:
            row[hym_column_name(alpha, N)] = float(
                np.mean(np.sum(np.abs(ev + N) ** alpha, axis=-1)))
        for i in range(config.rank):
            row[f"lambda_{i+1}"] = float(lam_vec[i])
        rows.append(row)
        return row, pd

    row, pd = snapshot_row(state)
    status = None
    while True:
        if row["i_func"] < params.stop_tolerance:
            status = "converged"
            break
        if state.t >= params.t_max - 1e-12:
            status = "max-time"
            break
        try:
            h = state.h
            for _ in range(steps_per_snap):
                h = stepper.step(h, dt)
        except StateCorruptionError:
            if abort_dump is not None:
                abort_dump(MetricState(state.t, h))
            raise
        state = MetricState(state.t + steps_per_snap * dt, h)
        row, pd = snapshot_row(state)

    ev = la.eigvalsh_desc(la.herm(pd.S))
    lam_vec = np.mean(ev, axis=(0, 1))
    return RunResult(
        status=status,
        final_state=state,
        rows=rows,
        columns=columns,
        background=background,
        higgs=higgs,
        lambda_vec=lam_vec,
        spatial_dev=float(np.max(np.abs(ev - lam_vec))),
        i_initial=rows[0]["i_func"],
        i_final=rows[-1]["i_func"],
        acd_initial=rows[0]["acd_p"],
        acd_final=rows[-1]["acd_p"],
        final_pair=pd,
    )
