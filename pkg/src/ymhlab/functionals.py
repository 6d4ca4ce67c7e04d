"""Scalar and field diagnostics of a metric-flow state.

Everything is derived from the mean curvature

    S = sqrt(-1) * theta,   theta = (1/2pi) Lambda (F + [phi, phi*]),

computed in the metric frame (H-self-adjoint, symmetrized) and converted to
the pair frame by conjugation with g = h^{1/2}; the two frames share their
pointwise spectrum.  Pair-frame quantities reproduce the evolved Higgs pair
(A(t), phi(t)) = g(A0, phi0) with all norms taken against H0, which is how
the energy density, I(t) and the C0 bound on phi are defined.
"""

import numpy as np
from dataclasses import dataclass

from . import geometry as geo
from . import la
from .bundle import evolving_curvature_coeff
from .constants import DZ_NORM_SQ
from .errors import InputError, PreconditionError

TWO_PI = 2.0 * np.pi


@dataclass
class MeanCurvature:
    grid: object
    S: np.ndarray            # (n, n, R, R)
    frame: str               # "pair" (Hermitian wrt H0) | "metric" (H-self-adjoint)

    def eigenvalues(self):
        """Pointwise descending spectrum, identical in either frame."""
        if self.frame == "pair":
            return la.eigvalsh_desc(la.herm(self.S))
        w = np.linalg.eigvals(self.S)
        w = np.sort(np.real(w), axis=-1)
        return w[..., ::-1]


def metric_curvature_coeff(state, higgs, background):
    """K = sqrt(-1) Lambda (F_H + [phi, phi^{*H}]), symmetrized H-self-adjoint.

    The Higgs bracket is exactly H-self-adjoint pointwise; the curvature part
    picks up an O(a^2) defect from the discrete Leibniz rule, removed here by
    averaging with its H-adjoint.
    """
    h = state.h
    hinv = la.inv_small(h)
    Fc = background.F0c + evolving_curvature_coeff(h, background)
    if higgs is not None and not higgs.is_zero():
        Fc = Fc + la.comm(higgs.Phi, hinv @ higgs.PhiDag @ h)
    K = 2.0 * Fc
    return 0.5 * (K + hinv @ la.dagger(K) @ h)


@dataclass
class PairData:
    """Snapshot bundle of pair-frame fields derived from a metric state."""
    grid: object
    t: float
    S: np.ndarray            # pair-frame mean curvature (Hermitian)
    Phi: np.ndarray          # pair-frame Higgs coefficient g Phi g^-1
    a01: np.ndarray          # (0,1) connection deviation  -(dbar g) g^-1
    b10: np.ndarray          # (1,0) connection deviation  g^-1 (del g)
    g: np.ndarray
    ginv: np.ndarray


def pair_frame(state, higgs, background):
    """Compute the evolved pair data g(A0, phi0) from h = g*g."""
    grid = background.grid
    a = grid.spacing
    W = background.links
    g, ginv = la.sqrtm_psd(la.herm(state.h))
    K = metric_curvature_coeff(state, higgs, background)
    S = la.herm(g @ K @ ginv) / TWO_PI
    Phi0 = higgs.Phi if higgs is not None else np.zeros_like(state.h)
    Phi_p = g @ Phi0 @ ginv
    a01 = -geo.dbar_c(g, W.Wx, W.Wy, a) @ ginv
    b10 = ginv @ geo.del_c(g, W.Wx, W.Wy, a)
    return PairData(grid, state.t, S, Phi_p, a01, b10, g, ginv)


def mean_curvature(state, higgs, background, frame="pair"):
    """Mean curvature S = sqrt(-1)*theta in the requested frame."""
    if frame == "metric":
        K = metric_curvature_coeff(state, higgs, background)
        return MeanCurvature(background.grid, K / TWO_PI, "metric")
    if frame != "pair":
        raise InputError(f"unknown frame {frame!r}")
    pd = pair_frame(state, higgs, background)
    return MeanCurvature(background.grid, pd.S, "pair")


def covariant_d_pair(X, pd, background):
    """(1,0) and (0,1) coefficients of D_{A(t)} X for a pair-frame 0-form."""
    W, a = background.links, pd.grid.spacing
    d10 = geo.del_c(X, W.Wx, W.Wy, a) + la.comm(pd.b10, X)
    d01 = geo.dbar_c(X, W.Wx, W.Wy, a) + la.comm(pd.a01, X)
    return d10, d01


def energy_density_from_pair(pd):
    """e(A, phi) = |F_A + [phi, phi*]|^2_{H0} + 2|del_A phi|^2_{H0} pointwise.

    On a curve the second term vanishes identically: del_A phi is a (2,0)
    End-valued form and dz ^ dz = 0.
    """
    return (TWO_PI ** 2) * la.frob2(pd.S)


def energy_density(state, higgs, background):
    pd = pair_frame(state, higgs, background)
    return energy_density_from_pair(pd)


def ymh(state, higgs, background):
    """Yang-Mills-Higgs energy: integral of the energy density; >= 0."""
    pd = pair_frame(state, higgs, background)
    return ymh_from_pair(pd)


def ymh_from_pair(pd):
    return pd.grid.integrate(energy_density_from_pair(pd))


def sup_theta_from_pair(pd):
    """L-infinity norm of theta: max over sites of the pointwise H0 norm."""
    return float(np.sqrt(np.max(la.frob2(pd.S))))


def sup_phi_sq_from_pair(pd):
    """sup_x |phi(t)|^2_{H0} of the evolved Higgs field (C0-bound quantity)."""
    return float(DZ_NORM_SQ * np.max(la.frob2(pd.Phi)))


def i_functional(state, higgs, background):
    pd = pair_frame(state, higgs, background)
    return i_functional_from_pair(pd, background)


def i_functional_from_pair(pd, background):
    """I(t) = int |D_A theta|^2_{H0} + 2 |[theta, phi]|^2_{H0}; vanishes at
    critical pairs (theta parallel and commuting with phi)."""
    d10, d01 = covariant_d_pair(pd.S, pd, background)
    dens = DZ_NORM_SQ * (la.frob2(d10) + la.frob2(d01))
    dens = dens + 2.0 * DZ_NORM_SQ * la.frob2(la.comm(pd.S, pd.Phi))
    return pd.grid.integrate(dens)


def hym_alpha_N(S, alpha, N):
    """HYM-type functional: integral of sum_j |s_j(x) + N|^alpha over the
    pointwise descending spectrum s_j of S."""
    if alpha < 1.0:
        raise InputError(f"hym_alpha_N requires alpha >= 1, got {alpha}")
    ev = S.eigenvalues() if isinstance(S, MeanCurvature) else la.eigvalsh_desc(S)
    dens = np.sum(np.abs(ev + N) ** alpha, axis=-1)
    grid = S.grid if isinstance(S, MeanCurvature) else None
    if grid is None:
        return float(np.mean(dens))
    return grid.integrate(dens)


def convex_test_integral(S, func):
    """integral of sum_j func(s_j(x)): nonincreasing along the flow for any
    convex func (ad-invariant convexity monotonicity)."""
    ev = S.eigenvalues() if isinstance(S, MeanCurvature) else la.eigvalsh_desc(S)
    return float(np.mean(np.sum(func(ev), axis=-1)))


def trace_heat_residual(states, higgs, background):
    """L2 defect of (d/dt - Lap) tr Lambda(F_H + [phi, phi*^H]) from three
    consecutive stored states, centered time differencing; O(dt^2 + n^-2)."""
    if len(states) < 3:
        raise PreconditionError("trace_heat_residual needs >= 3 consecutive states")
    s0, s1, s2 = states[-3], states[-2], states[-1]
    dt1, dt2 = s1.t - s0.t, s2.t - s1.t
    if dt1 <= 0 or dt2 <= 0 or abs(dt1 - dt2) > 1e-9 * max(dt1, dt2):
        raise PreconditionError("states must be equally spaced in time")
    grid = background.grid
    traces = [np.real(la.trace(metric_curvature_coeff(s, higgs, background)))
              for s in (s0, s1, s2)]
    ddt = (traces[2] - traces[0]) / (s2.t - s0.t)
    one = np.ones((grid.n, grid.n), dtype=complex)
    lap = np.real(geo.laplacian_fb(traces[1].astype(complex), one, one, grid.spacing))
    return float(np.sqrt(grid.integrate((ddt - lap) ** 2)))


# -- projections, degrees, filtration diagnostics ----------------------------

def _check_projector(pi, tol=1e-8):
    dev = max(float(np.max(np.abs(pi @ pi - pi))),
              float(np.max(np.abs(pi - la.dagger(pi)))))
    if dev > tol:
        raise InputError(f"projector identities violated by {dev:.3e} > {tol:.0e}")


def degree_via_projection(pi, state, higgs, background):
    """Degree of the subsheaf cut out by the Hermitian projector field pi:

        (1/2pi) int [ tr(sqrt(-1) Lambda(F + [phi,phi*]) pi)
                      - |dbar_A pi|^2 - |[phi, pi]|^2 ],

    evaluated on the evolved pair in the pair frame.  Exact integer for a
    holomorphic phi-invariant subbundle.
    """
    pi = np.asarray(pi, dtype=complex)
    _check_projector(pi)
    pd = pair_frame(state, higgs, background)
    grid = background.grid
    W, a = background.links, grid.spacing
    tr_term = np.real(la.trace(pd.S @ pi))
    dbar_pi = geo.dbar_c(pi, W.Wx, W.Wy, a) + la.comm(pd.a01, pi)
    comm_pi = la.comm(pd.Phi, pi)
    penalty = (DZ_NORM_SQ / TWO_PI) * (la.frob2(dbar_pi) + la.frob2(comm_pi))
    return grid.integrate(tr_term - penalty)


def whc_residuals(pi, state, higgs, background):
    """Weak phi-holomorphy residuals of a Hermitian projector field:

    r1 = |(Id-pi) dbar_A pi|_L2, r2 = |pi^2-pi|_L2 + |pi-pi*|_L2,
    r3 = |(Id-pi) [phi, pi]|_L2 (Frobenius L2 norms of the defect fields).
    """
    pi = np.asarray(pi, dtype=complex)
    pd = pair_frame(state, higgs, background)
    grid = background.grid
    W, a = background.links, grid.spacing
    eye = np.eye(pi.shape[-1], dtype=complex)
    dbar_pi = geo.dbar_c(pi, W.Wx, W.Wy, a) + la.comm(pd.a01, pi)
    r1 = np.sqrt(grid.integrate(la.frob2((eye - pi) @ dbar_pi)))
    r2 = (np.sqrt(grid.integrate(la.frob2(pi @ pi - pi)))
          + np.sqrt(grid.integrate(la.frob2(pi - la.dagger(pi)))))
    r3 = np.sqrt(grid.integrate(la.frob2((eye - pi) @ la.comm(pd.Phi, pi))))
    return float(r1), float(r2), float(r3)


def psi_hn_projection(spans, slopes, state, nest_tol=1e-8):
    """HN projection Psi = sum mu_i (pi_i - pi_{i-1}) for a nested filtration,
    orthonormalized in the evolving metric (projections computed in the pair
    frame); eigenvalues are exactly the slopes with the step multiplicities."""
    if len(spans) != len(slopes) or not spans:
        raise InputError("filtration spans and slopes must align")
    g, _ = la.sqrtm_psd(la.herm(state.h))
    pis = []
    prev_rank = 0
    for V in spans:
        V = np.asarray(V, dtype=complex)
        if V.ndim != 2 or V.shape[1] <= prev_rank:
            raise InputError("filtration ranks must strictly increase")
        U = g @ V
        gram = la.dagger(U) @ U
        pis.append(U @ la.inv_small(gram) @ la.dagger(U))
        prev_rank = V.shape[1]
    for k in range(len(pis) - 1):
        dev = float(np.max(np.abs(pis[k] @ pis[k + 1] - pis[k])))
        if dev > nest_tol:
            raise InputError(f"filtration not nested at step {k + 1}: defect {dev:.3e}")
    psi = np.zeros_like(pis[0])
    prev = np.zeros_like(pis[0])
    for mu, pi in zip(slopes, pis):
        psi = psi + mu * (pi - prev)
        prev = pi
    return psi


def approx_critical_distance(state, higgs, background, spans, slopes, p=2):
    """L^p distance of sqrt(-1)/2pi Lambda(F + [phi,phi*]) from the HN
    projection of the declared filtration in the evolving metric."""
    if p < 1:
        raise InputError(f"approx_critical_distance requires p >= 1, got {p}")
    pd = pair_frame(state, higgs, background)
    psi = psi_hn_projection(spans, slopes, state)
    dev = np.sqrt(la.frob2(pd.S - psi))
    if np.isinf(p):
        return float(np.max(dev))
    return float(pd.grid.integrate(dev ** p) ** (1.0 / p))
