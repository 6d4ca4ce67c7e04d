"""Discrete flat Kaehler geometry of the unit-area torus.

Fields live on an n x n periodic grid with spacing a = 1/n (side 1, area 1).
Covariant derivatives are central differences dressed with background link
phases; see constants.py for the orientation and normalization conventions,
which are fixed once and asserted by tests.

Array layout: site (jx, jy) at position (jx*a, jy*a); section-valued data is
(n, n) complex, endomorphism-valued data is (n, n, R, R) complex, C order.
"""

import numpy as np
from dataclasses import dataclass, field as dc_field

from .constants import COMPLEX, SQRTM1_LAMBDA
from .errors import ConfigurationError

FORM0 = "0"
FORM10 = "(1,0)"
FORM01 = "(0,1)"
FORM11 = "(1,1)"


@dataclass(frozen=True)
class TorusGrid:
    """Periodic n x n discretization of the unit-area flat torus."""
    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8:
            raise ConfigurationError(f"grid size must be an integer >= 8, got {self.n!r}")

    @property
    def spacing(self):
        return 1.0 / self.n

    def coords(self):
        """Meshgrid (X, Y) of site positions, indexed [jx, jy]."""
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, indexing="ij")

    def integrate(self, f):
        """Integral over the unit torus: sum f * spacing^2, exact for constants.

        Accepts a real (n, n) array (or a Field holding one).
        """
        data = f.data if isinstance(f, Field) else np.asarray(f)
        if np.iscomplexobj(data):
            im = float(np.abs(np.mean(np.imag(data))))
            if im > 1e-9 * (1.0 + float(np.abs(np.mean(np.real(data))))):
                raise ConfigurationError("integrate expects a real-valued scalar field")
            data = np.real(data)
        # n^2 * a^2 == 1 identically when written as a mean
        return float(np.mean(data))


@dataclass
class Field:
    """Grid field with a form-degree tag and a sector signature.

    sector is ("sec", twist) for a line-sector section or ("end", degrees)
    for an End(E)-valued field; arithmetic requires matching tags.
    """
    grid: TorusGrid
    data: np.ndarray
    degree: str = FORM0
    sector: tuple = ("sec", 0)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=COMPLEX)
        n = self.grid.n
        if self.data.shape[:2] != (n, n) or self.data.ndim not in (2, 4):
            raise ConfigurationError(
                f"field data shape {self.data.shape} does not match grid n={n}")

    def _require_like(self, other):
        if self.grid.n != other.grid.n or self.degree != other.degree \
                or self.sector != other.sector:
            raise ConfigurationError(
                f"field mismatch: ({self.degree},{self.sector}) vs "
                f"({other.degree},{other.sector})")

    def __add__(self, other):
        self._require_like(other)
        return Field(self.grid, self.data + other.data, self.degree, self.sector)

    def __sub__(self, other):
        self._require_like(other)
        return Field(self.grid, self.data - other.data, self.degree, self.sector)

    def __mul__(self, c):
        return Field(self.grid, self.data * c, self.degree, self.sector)

    __rmul__ = __mul__


def constant_flux_phases(n, d):
    """Link phases of the twist-d line sector in the constant-flux gauge.

    All x-links trivial except a boundary column; y-links carry an
    x-dependent phase.  Every counterclockwise plaquette argument equals
    -2*pi*d/n^2 exactly (magnetic field B = -2*pi*d; see constants.py),
    so the degree readout is +d and, for d > 0, the sector carries a
    d-dimensional space of discrete holomorphic sections.
    """
    jx = np.arange(n, dtype=float)[:, None]
    jy = np.arange(n, dtype=float)[None, :]
    uy = np.exp(-2j * np.pi * d * jx / n**2) * np.ones((1, n))
    ux = np.ones((n, n), dtype=COMPLEX)
    ux[n - 1, :] = np.exp(2j * np.pi * d * jy[0] / n)
    return ux, uy.astype(COMPLEX)


@dataclass
class SectorLinks:
    """Unit-modulus background links for a single line sector of given twist."""
    grid: TorusGrid
    twist: int
    ux: np.ndarray
    uy: np.ndarray

    @classmethod
    def constant_flux(cls, grid, twist):
        ux, uy = constant_flux_phases(grid.n, twist)
        return cls(grid, int(twist), ux, uy)

    @property
    def sector(self):
        return ("sec", self.twist)

    @property
    def Wx(self):
        return self.ux

    @property
    def Wy(self):
        return self.uy

    def plaquette_args(self):
        """Per-plaquette flux, in the orientation where the total is 2*pi*twist."""
        p = (self.ux * np.roll(self.uy, -1, axis=0)
             * np.conj(np.roll(self.ux, -1, axis=1)) * np.conj(self.uy))
        return -np.angle(p)

    def total_flux(self):
        return float(np.sum(self.plaquette_args()))

    def check(self, tol=1e-12):
        if np.max(np.abs(np.abs(self.ux) - 1.0)) > tol \
                or np.max(np.abs(np.abs(self.uy) - 1.0)) > tol:
            raise ConfigurationError("links must be unit modulus")
        flux = self.total_flux() / (2 * np.pi)
        if abs(flux - round(flux)) > 1e-9:
            raise ConfigurationError(f"plaquette flux {flux} is not quantized")


@dataclass
class EndLinks:
    """Transport phases for End(E)-valued fields over a split background.

    Entry (i, j) of an endomorphism lives in the twist (d_i - d_j) sector;
    conjugation by the diagonal background links acts entrywise through
    Wmu[i, j] = umu_i * conj(umu_j).
    """
    grid: TorusGrid
    degrees: tuple
    factors: list                     # per-factor SectorLinks
    Wx: np.ndarray = dc_field(default=None)
    Wy: np.ndarray = dc_field(default=None)

    def __post_init__(self):
        n = self.grid.n
        R = len(self.degrees)
        ux = np.stack([f.ux for f in self.factors])   # (R, n, n)
        uy = np.stack([f.uy for f in self.factors])
        self.Wx = np.transpose(ux[:, None] * np.conj(ux[None, :]), (2, 3, 0, 1)).copy()
        self.Wy = np.transpose(uy[:, None] * np.conj(uy[None, :]), (2, 3, 0, 1)).copy()
        assert self.Wx.shape == (n, n, R, R)

    @property
    def sector(self):
        return ("end", tuple(self.degrees))


# -- raw covariant difference kernels (arrays + transport phases) -----------

def _shift(f, axis, s):
    return np.roll(f, -s, axis=axis)


def dmu_central(f, W, axis, a):
    """(W(x) f(x+mu) - conj(W(x-mu)) f(x-mu)) / 2a."""
    Wb = np.conj(_shift(W, axis, -1))
    return (W * _shift(f, axis, +1) - Wb * _shift(f, axis, -1)) / (2 * a)


def dmu_fwd(f, W, axis, a):
    return (W * _shift(f, axis, +1) - f) / a


def dmu_bwd(f, W, axis, a):
    Wb = np.conj(_shift(W, axis, -1))
    return (f - Wb * _shift(f, axis, -1)) / a


def dbar_c(f, Wx, Wy, a):
    return 0.5 * (dmu_central(f, Wx, 0, a) + 1j * dmu_central(f, Wy, 1, a))


def del_c(f, Wx, Wy, a):
    return 0.5 * (dmu_central(f, Wx, 0, a) - 1j * dmu_central(f, Wy, 1, a))


def dbar_fwd(f, Wx, Wy, a):
    return 0.5 * (dmu_fwd(f, Wx, 0, a) + 1j * dmu_fwd(f, Wy, 1, a))


def dbar_bwd(f, Wx, Wy, a):
    return 0.5 * (dmu_bwd(f, Wx, 0, a) + 1j * dmu_bwd(f, Wy, 1, a))


def del_fwd(f, Wx, Wy, a):
    return 0.5 * (dmu_fwd(f, Wx, 0, a) - 1j * dmu_fwd(f, Wy, 1, a))


def del_bwd(f, Wx, Wy, a):
    return 0.5 * (dmu_bwd(f, Wx, 0, a) - 1j * dmu_bwd(f, Wy, 1, a))


def laplacian_fb(f, Wx, Wy, a):
    """Compact covariant 5-point Laplacian (symbol -(2/a^2)(2-cos-cos))."""
    out = -4.0 * f
    out = out + Wx * _shift(f, 0, +1) + np.conj(_shift(Wx, 0, -1)) * _shift(f, 0, -1)
    out = out + Wy * _shift(f, 1, +1) + np.conj(_shift(Wy, 1, -1)) * _shift(f, 1, -1)
    return out / a**2


def laplacian_wide(f, Wx, Wy, a):
    """Double-spaced covariant 5-point Laplacian (used by the dbar stabilizer)."""
    Wx2 = Wx * _shift(Wx, 0, +1)
    Wy2 = Wy * _shift(Wy, 1, +1)
    out = -4.0 * f
    out = out + Wx2 * _shift(f, 0, +2) + np.conj(_shift(Wx2, 0, -2)) * _shift(f, 0, -2)
    out = out + Wy2 * _shift(f, 1, +2) + np.conj(_shift(Wy2, 1, -2)) * _shift(f, 1, -2)
    return out / (2 * a) ** 2


def dbar_stabilized(f, Wx, Wy, a, wilson=1.0):
    """Doubler-free dbar: central difference plus the O(a^3) Wilson-like
    stabilizer (wilson*a/2)(Lap_compact - Lap_wide).  This is the operator
    whose near-kernel defines discrete holomorphic sections; unlike the bare
    central difference it is not blind to checkerboard modes."""
    out = dbar_c(f, Wx, Wy, a)
    if wilson:
        out = out + (wilson * a / 2.0) * (laplacian_fb(f, Wx, Wy, a)
                                          - laplacian_wide(f, Wx, Wy, a))
    return out


# -- tagged operations (spec surface) ---------------------------------------

def _check_op(f, links, want_degree):
    if f.degree != want_degree:
        raise ConfigurationError(f"operand must be a {want_degree}-form, got {f.degree}")
    if f.grid.n != links.grid.n or f.sector != links.sector:
        raise ConfigurationError(
            f"field sector {f.sector} does not match links sector {links.sector}")


def covariant_dbar(f, links):
    """Second-order central covariant dbar of a 0-form; exactly linear."""
    _check_op(f, links, FORM0)
    a = f.grid.spacing
    return Field(f.grid, dbar_c(f.data, links.Wx, links.Wy, a), FORM01, f.sector)


def covariant_del(f, links):
    """Second-order central covariant del of a 0-form; mirror of covariant_dbar."""
    _check_op(f, links, FORM0)
    a = f.grid.spacing
    return Field(f.grid, del_c(f.data, links.Wx, links.Wy, a), FORM10, f.sector)


def laplacian(f, links):
    """Covariant 5-point Laplacian of a 0-form.

    Sign convention (see constants.py): agrees with -2*sqrt(-1)*Lambda*dbar*del
    on smooth fields; self-adjoint for the L2 pairing by summation by parts.
    """
    _check_op(f, links, FORM0)
    a = f.grid.spacing
    return Field(f.grid, laplacian_fb(f.data, links.Wx, links.Wy, a), FORM0, f.sector)


def lambda_contract(F):
    """Contraction with omega of a (1,1)-form, normalized by Lambda(omega Id) = Id."""
    if F.degree != FORM11:
        raise ConfigurationError(f"lambda_contract expects a (1,1)-form, got {F.degree}")
    return Field(F.grid, -2j * F.data, FORM0, F.sector)


def sqrtm1_lambda(Fc):
    """sqrt(-1)*Lambda on a raw dz^dzbar coefficient array: multiply by 2."""
    return SQRTM1_LAMBDA * Fc


def integrate(f, grid=None):
    """Module-level convenience around TorusGrid.integrate."""
    if isinstance(f, Field):
        return f.grid.integrate(f)
    if grid is None:
        raise ConfigurationError("integrate(raw array) needs an explicit grid")
    return grid.integrate(f)
