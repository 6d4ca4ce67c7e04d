"""Geometry operator tests against analytic oracles."""

import numpy as np
import pytest

from ymhlab.geometry import (TorusGrid, SectorLinks, EndLinks, Field,
                             covariant_dbar, covariant_del, laplacian,
                             lambda_contract, FORM0, FORM11, dmu_central)
from ymhlab.errors import ConfigurationError


def mode(grid, p, q):
    X, Y = grid.coords()
    return np.exp(2j * np.pi * (p * X + q * Y))


def l2(grid, arr):
    return np.sqrt(grid.integrate(np.abs(arr) ** 2))


def test_unit_volume_weights():
    for n in (8, 16, 64):
        grid = TorusGrid(n)
        assert grid.integrate(np.full((n, n), 3.25)) == pytest.approx(3.25, abs=0)
        assert grid.spacing * n == 1.0
        assert grid.integrate(np.ones((n, n))) == 1.0


def test_grid_rejects_small_n():
    with pytest.raises(ConfigurationError):
        TorusGrid(4)


def test_dbar_constant_on_trivial_sector_is_zero():
    grid = TorusGrid(16)
    links = SectorLinks.constant_flux(grid, 0)
    f = Field(grid, np.full((16, 16), 2.0 - 1.0j), FORM0, ("sec", 0))
    out = covariant_dbar(f, links)
    assert np.max(np.abs(out.data)) == 0.0
    out = covariant_del(f, links)
    assert np.max(np.abs(out.data)) == 0.0


def test_dbar_del_match_analytic_at_second_order():
    # Richardson: slope of log2(error) between n and 2n in [1.8, 2.2]
    p, q = 1, 2
    errs_dbar, errs_del = [], []
    for n in (16, 32, 64):
        grid = TorusGrid(n)
        links = SectorLinks.constant_flux(grid, 0)
        f = mode(grid, p, q)
        fld = Field(grid, f, FORM0, ("sec", 0))
        exact_dbar = np.pi * (1j * p - q) * f
        exact_del = np.pi * (1j * p + q) * f
        errs_dbar.append(l2(grid, covariant_dbar(fld, links).data - exact_dbar))
        errs_del.append(l2(grid, covariant_del(fld, links).data - exact_del))
    for errs in (errs_dbar, errs_del):
        orders = [np.log2(e0 / e1) for e0, e1 in zip(errs, errs[1:])]
        assert all(1.8 <= o <= 2.2 for o in orders), orders


def test_dbar_linearity():
    grid = TorusGrid(16)
    links = SectorLinks.constant_flux(grid, 2)
    rng = np.random.default_rng(5)
    f = Field(grid, rng.standard_normal((16, 16))
              + 1j * rng.standard_normal((16, 16)), FORM0, ("sec", 2))
    g = Field(grid, rng.standard_normal((16, 16))
              + 1j * rng.standard_normal((16, 16)), FORM0, ("sec", 2))
    a, b = 1.3 - 0.2j, -0.7 + 2.0j
    lhs = covariant_dbar(a * f + b * g, links).data
    rhs = a * covariant_dbar(f, links).data + b * covariant_dbar(g, links).data
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_del_plus_dbar_is_x_derivative():
    grid = TorusGrid(16)
    links = SectorLinks.constant_flux(grid, 1)
    rng = np.random.default_rng(6)
    f = Field(grid, rng.standard_normal((16, 16))
              + 1j * rng.standard_normal((16, 16)), FORM0, ("sec", 1))
    total = covariant_del(f, links).data + covariant_dbar(f, links).data
    dx = dmu_central(f.data, links.Wx, 0, grid.spacing)
    assert np.max(np.abs(total - dx)) < 1e-12


def test_lambda_contract_normalization():
    grid = TorusGrid(8)
    # omega * Id has dz^dzbar coefficient i/2
    omega = Field(grid, np.full((8, 8), 0.5j), FORM11, ("sec", 0))
    out = lambda_contract(omega)
    assert np.max(np.abs(out.data - 1.0)) < 1e-15
    zero = Field(grid, np.zeros((8, 8)), FORM11, ("sec", 0))
    assert np.max(np.abs(lambda_contract(zero).data)) == 0.0


def test_lambda_contract_rejects_wrong_degree():
    grid = TorusGrid(8)
    f = Field(grid, np.ones((8, 8)), FORM0, ("sec", 0))
    with pytest.raises(ConfigurationError):
        lambda_contract(f)


def test_background_degree_readout_from_plaquettes():
    # integrate(sqrt(-1) Lambda F)/2pi = d via the plaquette flux oracle
    grid = TorusGrid(16)
    for d in (1, 3, -2):
        links = SectorLinks.constant_flux(grid, d)
        links.check()
        fc = links.plaquette_args() / (2 * grid.spacing ** 2)
        assert grid.integrate(2.0 * fc) / (2 * np.pi) == pytest.approx(d, abs=1e-12)
        # degree-3 example: the sqrt(-1)-contracted trace integrates to 2 pi d
        assert grid.integrate(2.0 * fc) == pytest.approx(2 * np.pi * d, abs=1e-9)


def test_integrate_nonnegative():
    grid = TorusGrid(8)
    rng = np.random.default_rng(0)
    f = rng.random((8, 8))
    assert grid.integrate(f) >= 0.0


def test_flux_quantization():
    grid = TorusGrid(32)
    for d in (-3, -1, 0, 1, 2, 5):
        links = SectorLinks.constant_flux(grid, d)
        flux = links.total_flux() / (2 * np.pi)
        assert abs(flux - round(flux)) < 1e-9
        assert round(flux) == d


def test_laplacian_constants_and_symbol():
    grid = TorusGrid(16)
    links = SectorLinks.constant_flux(grid, 0)
    c = Field(grid, np.full((16, 16), 1.7 + 0.3j), FORM0, ("sec", 0))
    assert np.max(np.abs(laplacian(c, links).data)) < 1e-12
    for (p, q) in ((1, 0), (2, 3)):
        f = mode(grid, p, q)
        fld = Field(grid, f, FORM0, ("sec", 0))
        a = grid.spacing
        eig = -(2.0 / a**2) * (2 - np.cos(2 * np.pi * p * a)
                               - np.cos(2 * np.pi * q * a))
        out = laplacian(fld, links).data
        assert np.max(np.abs(out - eig * f)) < 1e-8 * abs(eig)


def test_laplacian_self_adjoint():
    grid = TorusGrid(16)
    rng = np.random.default_rng(11)
    for d in (0, 2):
        links = SectorLinks.constant_flux(grid, d)
        f = Field(grid, rng.standard_normal((16, 16))
                  + 1j * rng.standard_normal((16, 16)), FORM0, ("sec", d))
        g = Field(grid, rng.standard_normal((16, 16))
                  + 1j * rng.standard_normal((16, 16)), FORM0, ("sec", d))
        lf, lg = laplacian(f, links).data, laplacian(g, links).data
        lhs = grid.integrate(np.real(lf * np.conj(g.data)))
        rhs = grid.integrate(np.real(f.data * np.conj(lg)))
        assert abs(lhs - rhs) < 1e-10 * (1 + abs(lhs))


def test_discrete_stokes():
    # integral of a trace-sector central covariant difference telescopes to zero
    grid = TorusGrid(16)
    rng = np.random.default_rng(3)
    f = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    links0 = SectorLinks.constant_flux(grid, 0)
    for axis, W in ((0, links0.Wx), (1, links0.Wy)):
        div = dmu_central(f, W, axis, grid.spacing)
        assert abs(grid.integrate(np.real(div))) < 1e-10
        assert abs(grid.integrate(np.imag(div))) < 1e-10


def test_field_tag_mismatch_raises():
    grid = TorusGrid(8)
    links = SectorLinks.constant_flux(grid, 1)
    f0 = Field(grid, np.ones((8, 8)), FORM0, ("sec", 0))
    with pytest.raises(ConfigurationError):
        covariant_dbar(f0, links)           # sector mismatch
    f11 = Field(grid, np.ones((8, 8)), FORM11, ("sec", 1))
    with pytest.raises(ConfigurationError):
        covariant_dbar(f11, links)          # degree mismatch
    g8, g16 = Field(TorusGrid(8), np.ones((8, 8))), Field(TorusGrid(16), np.ones((16, 16)))
    with pytest.raises(ConfigurationError):
        _ = g8 + g16


def test_end_links_transport_shape():
    grid = TorusGrid(8)
    factors = [SectorLinks.constant_flux(grid, d) for d in (1, -1)]
    links = EndLinks(grid, (1, -1), factors)
    assert links.Wx.shape == (8, 8, 2, 2)
    # diagonal transport is trivial (twist 0 on each diagonal entry)
    assert np.max(np.abs(links.Wx[..., 0, 0] - 1.0)) < 1e-15
    assert np.max(np.abs(links.Wy[..., 1, 1] - 1.0)) < 1e-15
