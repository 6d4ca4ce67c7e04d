"""Split Hermitian Higgs bundles over the discrete torus.

A bundle is an ordered direct sum of line factors of prescribed degrees,
carrying the constant-flux background Chern connection A0 and reference
metric H0 = Id in the factor frame.  The Higgs field is a block matrix of
constants (between equal degrees) and discrete holomorphic sections
(strictly lower -> strictly higher degree), solved from the near-kernel of
the stabilized sector dbar operator.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses import dataclass, field as dc_field

from . import geometry as geo
from .geometry import Field, TorusGrid, SectorLinks, EndLinks, FORM0, FORM11
from . import la
from .constants import (COMPLEX, HOLO_TOL_FACTOR, MIN_SITES_PER_FLUX,
                        ROUGHNESS_CUTOFF, WILSON_WEIGHT)
from .errors import ConfigurationError, StateCorruptionError


@dataclass(frozen=True)
class HiggsBlock:
    """Declared Higgs entry (i, j): factor j -> factor i, 0-based indices."""
    i: int
    j: int
    kind: str                  # "constant" | "solved" | "aliased"
    value: complex = 1.0       # constant/aliased amplitude
    seed: int = 0              # solver start vector seed (solved blocks)
    scale: float = 1.0         # solved-section amplitude


@dataclass(frozen=True)
class BundleConfig:
    degrees: tuple
    higgs_blocks: tuple = ()

    def __post_init__(self):
        if len(self.degrees) == 0:
            raise ConfigurationError("degrees list must be nonempty")
        R = self.rank
        for b in self.higgs_blocks:
            if not (0 <= b.i < R and 0 <= b.j < R):
                raise ConfigurationError(f"block ({b.i+1},{b.j+1}) out of range")
            di, dj = self.degrees[b.i], self.degrees[b.j]
            if di < dj:
                raise ConfigurationError(
                    f"block ({b.i+1},{b.j+1}) illegal: factor degree {di} < {dj} "
                    "(no holomorphic maps lower degree)")
            if b.kind in ("constant", "aliased") and di != dj:
                raise ConfigurationError(
                    f"block ({b.i+1},{b.j+1}) of kind {b.kind} requires equal degrees")
            if b.kind == "solved" and di == dj:
                raise ConfigurationError(
                    f"block ({b.i+1},{b.j+1}) of kind solved requires strictly "
                    "increasing degree")
            if b.kind not in ("constant", "solved", "aliased"):
                raise ConfigurationError(f"unknown block kind {b.kind!r}")

    @property
    def rank(self):
        return len(self.degrees)

    @property
    def total_degree(self):
        return int(sum(self.degrees))

    @property
    def slope(self):
        return self.total_degree / self.rank


@dataclass
class Background:
    """Fixed background data: per-factor links, End transport, curvature F_{A0}."""
    grid: TorusGrid
    config: BundleConfig
    links: EndLinks
    factor_links: list
    F0c: np.ndarray          # (n, n, R, R) dz^dzbar coefficient, block diagonal

    @property
    def sector(self):
        return self.links.sector


def build_background(config, grid):
    """Construct links and background curvature; per-factor flux exactly d_i."""
    n = grid.n
    dmax = max((abs(d) for d in config.degrees), default=0)
    if dmax and n * n < MIN_SITES_PER_FLUX * dmax:
        raise ConfigurationError(
            f"grid too coarse: need n^2 >= {MIN_SITES_PER_FLUX}*max|d| "
            f"= {MIN_SITES_PER_FLUX * dmax}, got n^2 = {n*n}")
    factors = [SectorLinks.constant_flux(grid, d) for d in config.degrees]
    for f in factors:
        f.check()
    links = EndLinks(grid, tuple(config.degrees), factors)
    R = config.rank
    a2 = grid.spacing ** 2
    F0c = np.zeros((n, n, R, R), dtype=COMPLEX)
    for i, f in enumerate(factors):
        # flux args are quoted in the degree orientation; coefficient pi*d_i
        F0c[:, :, i, i] = f.plaquette_args() / (2.0 * a2)
    return Background(grid, config, links, factors, F0c)


# -- discrete holomorphic sections ------------------------------------------

def dbar_operator(links, stabilized=True, wilson=WILSON_WEIGHT):
    """Sparse matrix of the sector dbar on (n,n) fields, row-major flattening.

    The stabilized variant adds (wilson*a/2) * (Lap_compact - Lap_wide), an
    O(a^3) correction on smooth fields that lifts the lattice doubler
    branches to O(1/a) singular values.
    """
    grid, ux, uy = links.grid, links.ux, links.uy
    n, a = grid.n, grid.spacing
    N = n * n
    idx = np.arange(N).reshape(n, n)
    rows, cols, vals = [], [], []

    def add(sx, sy, coeff):
        src = np.roll(np.roll(idx, -sx, axis=0), -sy, axis=1)
        rows.append(idx.ravel())
        cols.append(src.ravel())
        vals.append(np.broadcast_to(coeff, (n, n)).ravel().astype(COMPLEX))

    txm = np.conj(np.roll(ux, 1, axis=0))
    tym = np.conj(np.roll(uy, 1, axis=1))
    add(1, 0, ux / (4 * a))
    add(-1, 0, -txm / (4 * a))
    add(0, 1, 1j * uy / (4 * a))
    add(0, -1, -1j * tym / (4 * a))
    if stabilized and wilson:
        c1 = wilson * 0.5 / a
        c2 = wilson * 0.5 / (4 * a)
        tx2 = ux * np.roll(ux, -1, axis=0)
        ty2 = uy * np.roll(uy, -1, axis=1)
        txm2 = np.conj(np.roll(ux, 1, axis=0) * np.roll(ux, 2, axis=0))
        tym2 = np.conj(np.roll(uy, 1, axis=1) * np.roll(uy, 2, axis=1))
        add(1, 0, c1 * ux)
        add(-1, 0, c1 * txm)
        add(0, 1, c1 * uy)
        add(0, -1, c1 * tym)
        add(0, 0, np.full((n, n), -4 * c1, dtype=COMPLEX))
        add(2, 0, -c2 * tx2)
        add(-2, 0, -c2 * txm2)
        add(0, 2, -c2 * ty2)
        add(0, -2, -c2 * tym2)
        add(0, 0, np.full((n, n), 4 * c2, dtype=COMPLEX))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N))


def _laplacian_operator(links):
    grid, ux, uy = links.grid, links.ux, links.uy
    n, a = grid.n, grid.spacing
    N = n * n
    idx = np.arange(N).reshape(n, n)
    rows, cols, vals = [], [], []

    def add(sx, sy, coeff):
        src = np.roll(np.roll(idx, -sx, axis=0), -sy, axis=1)
        rows.append(idx.ravel())
        cols.append(src.ravel())
        vals.append(np.broadcast_to(coeff, (n, n)).ravel().astype(COMPLEX))

    add(1, 0, ux / a**2)
    add(-1, 0, np.conj(np.roll(ux, 1, axis=0)) / a**2)
    add(0, 1, uy / a**2)
    add(0, -1, np.conj(np.roll(uy, 1, axis=1)) / a**2)
    add(0, 0, np.full((n, n), -4.0 / a**2, dtype=COMPLEX))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N))


def near_kernel(twist, grid, k=None, seed=0):
    """Smallest singular triples of the stabilized sector dbar.

    Returns (svals, vectors, smooth_mask): k smallest singular values, the
    corresponding right singular vectors as (n,n) fields, and a mask that
    rejects lattice doubler modes by their covariant-Laplacian roughness
    -a^2 <v, Lap v> (true sections sit at O(|d| a^2), doublers at O(1)).
    """
    links = SectorLinks.constant_flux(grid, twist)
    T = dbar_operator(links)
    L = _laplacian_operator(links)
    n = grid.n
    if k is None:
        k = abs(int(twist)) + 3
    M = (T.getH() @ T).tocsc()
    rng = np.random.default_rng(np.uint64(seed) ^ np.uint64(0x9E3779B97F4A7C15))
    v0 = rng.standard_normal(n * n) + 1j * rng.standard_normal(n * n)
    vals, vecs = spla.eigsh(M, k=k, sigma=-1e-3, which="LM", v0=v0)
    svals = np.sqrt(np.maximum(vals, 0.0))
    order = np.argsort(svals)
    svals, vecs = svals[order], vecs[:, order]
    a2 = grid.spacing ** 2
    rough = np.array([
        float(np.real(-np.vdot(vecs[:, j], L @ vecs[:, j]))) * a2
        for j in range(k)])
    smooth = rough < ROUGHNESS_CUTOFF
    fields = [vecs[:, j].reshape(n, n) for j in range(k)]
    return svals, fields, smooth


def solve_holomorphic_section(twist, grid, seed=0):
    """Unit-L2 discrete holomorphic section of the twist-d sector, d > 0.

    The section is the smallest accepted singular vector of the stabilized
    dbar; its residual against the central dbar is O(n^-2), well below the
    10/n^2 holomorphy budget.  Phase is fixed by making the largest-modulus
    site value real positive, so a given (twist, grid, seed) is reproducible.
    """
    d = int(twist)
    if d <= 0:
        raise ConfigurationError(
            f"twist {d} carries no nonzero holomorphic section (need d > 0)")
    svals, fields, smooth = near_kernel(d, grid, k=d + 3, seed=seed)
    tol = HOLO_TOL_FACTOR / grid.n**2
    accepted = [f for s, f, ok in zip(svals, fields, smooth) if ok and s < tol]
    if len(accepted) != d:
        raise StateCorruptionError(
            f"twist {d}: expected a {d}-dimensional near-kernel, found "
            f"{len(accepted)} (svals {svals})")
    v = accepted[0]
    peak = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    v = v * (np.abs(v[peak]) / v[peak])
    v = v / np.sqrt(np.mean(np.abs(v) ** 2))
    return Field(grid, v, FORM0, ("sec", d))


# -- Higgs field --------------------------------------------------------------

@dataclass
class HiggsField:
    """Block-structured dz-coefficient of the Higgs field; immutable in flow."""
    grid: TorusGrid
    config: BundleConfig
    Phi: np.ndarray                      # (n, n, R, R)
    holo_residual: float = 0.0

    @property
    def PhiDag(self):
        return la.dagger(self.Phi)

    def as_field(self):
        return Field(self.grid, self.Phi, FORM0, ("end", tuple(self.config.degrees)))

    def is_zero(self):
        return not self.config.higgs_blocks


def build_higgs(config, background, holo_tol=None):
    """Assemble Phi from the declared blocks and verify discrete holomorphy."""
    grid = background.grid
    n, R = grid.n, config.rank
    Phi = np.zeros((n, n, R, R), dtype=COMPLEX)
    # blocks on the same entry superpose
    for b in config.higgs_blocks:
        if b.kind == "constant":
            Phi[:, :, b.i, b.j] += b.value
        elif b.kind == "aliased":
            jx = np.arange(n)[:, None]
            jy = np.arange(n)[None, :]
            Phi[:, :, b.i, b.j] += b.value * ((-1.0) ** (jx + jy))
        else:
            d = config.degrees[b.i] - config.degrees[b.j]
            s = solve_holomorphic_section(d, grid, seed=b.seed)
            Phi[:, :, b.i, b.j] += b.scale * s.data
    f = Field(grid, Phi, FORM0, background.sector)
    res_field = geo.covariant_dbar(f, background.links)
    residual = float(np.sqrt(grid.integrate(la.frob2(res_field.data))))
    tol = (HOLO_TOL_FACTOR / n**2) if holo_tol is None else holo_tol
    if residual > tol:
        raise ConfigurationError(
            f"Higgs field fails discrete holomorphy: |dbar Phi|_L2 = "
            f"{residual:.3e} > {tol:.3e}")
    return HiggsField(grid, config, Phi, residual)


# -- metric state and curvature ----------------------------------------------

@dataclass
class MetricState:
    """Flow variable h = H0^{-1} H(t): positive Hermitian matrix field."""
    t: float
    h: np.ndarray                         # (n, n, R, R)
    cache: dict = dc_field(default_factory=dict)

    @classmethod
    def identity(cls, grid, rank):
        h = np.zeros((grid.n, grid.n, rank, rank), dtype=COMPLEX)
        h[..., np.arange(rank), np.arange(rank)] = 1.0
        return cls(0.0, h)

    def copy(self):
        return MetricState(self.t, self.h.copy())

    def check(self, herm_tol=1e-12):
        dev = float(np.max(np.abs(self.h - la.dagger(self.h))))
        if dev > herm_tol:
            raise StateCorruptionError(f"h not Hermitian: deviation {dev:.3e}")
        mn = la.min_eig_h(self.h)
        if mn <= 0.0:
            raise StateCorruptionError(f"h not positive: min eigenvalue {mn:.3e}")
        return mn


def chern_curvature(state, background):
    """F_H = F_{A0} + dbar(h^{-1} del_{H0} h) as a (1,1)-form field.

    Discretized with the symmetrized forward/backward covariant pair, which
    is second-order accurate and linearizes to the compact 5-point Laplacian
    (all lattice modes damped along the flow).  The trace integrates to
    2*pi*deg(E) exactly by telescoping, for every h.
    """
    h = state.h
    if la.min_eig_h(h) <= 0.0:
        raise StateCorruptionError("chern_curvature: h lost positivity")
    Fc = background.F0c + evolving_curvature_coeff(h, background)
    return Field(background.grid, Fc, FORM11, background.sector)


def evolving_curvature_coeff(h, background):
    """dz^dzbar coefficient of dbar(h^{-1} del h); no positivity check."""
    W, a = background.links, background.grid.spacing
    hinv = la.inv_small(h)
    p_fwd = hinv @ geo.del_fwd(h, W.Wx, W.Wy, a)
    p_bwd = hinv @ geo.del_bwd(h, W.Wx, W.Wy, a)
    # dbar(g dz) = -(dbar g) dz^dzbar
    return -0.5 * (geo.dbar_bwd(p_fwd, W.Wx, W.Wy, a)
                   + geo.dbar_fwd(p_bwd, W.Wx, W.Wy, a))


def higgs_adjoint_bracket(higgs, state):
    """[phi, phi^{*H}] as a (1,1)-form: coefficient [Phi, h^{-1} Phi^dag h].

    Pointwise algebra only; exactly trace-free and exactly H-self-adjoint.
    """
    h = state.h
    hinv = la.inv_small(h)
    psi = hinv @ higgs.PhiDag @ h
    coeff = la.comm(higgs.Phi, psi)
    return Field(higgs.grid, coeff, FORM11, ("end", tuple(higgs.config.degrees)))


def degree_readout(state, background):
    """integrate(tr sqrt(-1) Lambda F_H) / 2pi; h-independent by telescoping."""
    Fc = chern_curvature(state, background).data
    tr = np.real(la.trace(2.0 * Fc))
    return background.grid.integrate(tr) / (2 * np.pi)
