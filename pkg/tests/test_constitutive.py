import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poroprecond.constitutive import (FluidModel, RelPermModel, RockModel, density,
                                      mixture_density, porosity, porosity_p_coefficient, relperm)
from poroprecond.units import DEFAULT_UNITS, UnitError, UnitSystem, to_canonical


def test_density_linear_law():
    f = FluidModel(1000.0, 1e-3, 1.0, p_ref=10.0)
    rho, drho = density(f, np.array([10.0, 20.0]))
    np.testing.assert_allclose(rho, [1000.0, 1010.0])
    np.testing.assert_allclose(drho, 1.0)


def test_density_warns_when_nonpositive():
    with pytest.warns(RuntimeWarning):
        density(FluidModel(1000.0, 1.0, 1.0), -2.0)


def test_fluid_validation():
    with pytest.raises(ValueError):
        FluidModel(0.0, 1e-3, 1.0)
    with pytest.raises(ValueError):
        FluidModel(1.0, -1e-3, 1.0)
    with pytest.raises(ValueError):
        FluidModel(1.0, 1e-3, 0.0)


def test_relperm_endpoints():
    rp = RelPermModel(0.2, 0.2)
    krw, krn, _, _ = relperm(rp, np.array([0.2, 0.5, 0.8]))
    np.testing.assert_allclose(krw, [0.0, 0.25, 1.0])
    np.testing.assert_allclose(krn, [1.0, 0.25, 0.0])


@given(st.floats(0.05, 0.95))
def test_relperm_derivatives_match_differences(s):
    rp = RelPermModel(0.1, 0.15)
    h = 1e-7
    _, _, dw, dn = relperm(rp, s)
    wp, npl, _, _ = relperm(rp, s + h)
    wm, nm, _, _ = relperm(rp, s - h)
    if 0.1 + h < s < 0.85 - h:
        assert dw == pytest.approx((wp - wm) / (2 * h), rel=1e-6, abs=1e-9)
        assert dn == pytest.approx((npl - nm) / (2 * h), rel=1e-6, abs=1e-9)


@given(st.floats(-0.5, 1.5))
def test_relperm_bounded_monotone(s):
    krw, krn, dw, dn = relperm(RelPermModel(0.2, 0.1), s)
    assert 0.0 <= krw <= 1.0 and 0.0 <= krn <= 1.0
    assert dw >= 0.0 and dn <= 0.0


def test_relperm_validation():
    with pytest.raises(ValueError):
        RelPermModel(0.6, 0.4)


def test_rock_moduli():
    r = RockModel(5000.0, 0.25)
    assert r.K_dr == pytest.approx(10000.0 / 3.0, rel=1e-14)
    assert r.shear_modulus == pytest.approx(2000.0)
    assert r.lame_lambda == pytest.approx(2000.0)
    assert r.uniaxial_modulus == pytest.approx(6000.0)
    C = r.C_dr()
    np.testing.assert_allclose(C, C.T)
    assert np.all(np.linalg.eigvalsh(C) > 0)


@pytest.mark.parametrize("kw", [dict(nu=0.5), dict(nu=0.0), dict(E=-1.0), dict(biot=1.2),
                                dict(phi0=0.0)])
def test_rock_validation(kw):
    args = dict(E=5000.0, nu=0.25, biot=1.0, phi0=0.2)
    args.update(kw)
    with pytest.raises(ValueError):
        RockModel(**args)


def test_porosity_law():
    r = RockModel(5000.0, 0.25, 0.8, 0.2)
    cp = porosity_p_coefficient(r)
    assert cp == pytest.approx(0.6 * 0.2 / r.K_dr)
    phi, dphi_de, dphi_dp = porosity(r, 1e-3, 21.0, 0.0, 20.0)
    assert phi == pytest.approx(0.2 + 0.8e-3 + cp)
    assert dphi_de == 0.8 and dphi_dp == pytest.approx(cp)
    assert porosity_p_coefficient(RockModel(5000.0, 0.25, 1.0, 0.2)) == 0.0


def test_mixture_density_derivatives():
    r = RockModel(5000.0, 0.25, 0.7, 0.2, 2650.0)
    w, o = FluidModel(1035.0, 4.34e-4, 1.0, 20.0), FluidModel(863.0, 1.98e-4, 1.0, 20.0)

    def rho(eps, s, p):
        phi = porosity(r, eps, p, 0.0, 20.0)[0]
        return mixture_density(r, w, o, phi, s, p)[0]

    e, s, p = 1e-3, 0.4, 22.0
    phi = porosity(r, e, p, 0.0, 20.0)[0]
    _, d_e, d_s, d_p = mixture_density(r, w, o, phi, s, p)
    h = 1e-6
    assert d_e == pytest.approx((rho(e + h, s, p) - rho(e - h, s, p)) / (2 * h), rel=1e-6)
    assert d_s == pytest.approx((rho(e, s + h, p) - rho(e, s - h, p)) / (2 * h), rel=1e-6)
    assert d_p == pytest.approx((rho(e, s, p + h) - rho(e, s, p - h)) / (2 * h), rel=1e-5)


def test_units():
    assert DEFAULT_UNITS.gravity == pytest.approx(9.81e-6)
    assert to_canonical(1.0, "bar", "pressure") == pytest.approx(0.1)
    assert to_canonical(3600.0, "s", "time") == pytest.approx(1 / 24)
    with pytest.raises(UnitError):
        to_canonical(1.0, "furlong", "length")
    with pytest.raises(UnitError):
        to_canonical(1.0, "MPa", "time")
    kpa = UnitSystem(pressure=1e3, time=3600.0)
    # mobility * pressure / length^2 is a rate: invariant across unit systems up to time
    lam = 1.0 / kpa.viscosity_from_cp(1.0) * kpa.pressure_from_mpa(1.0)
    lam0 = 1.0 / DEFAULT_UNITS.viscosity_from_cp(1.0) * DEFAULT_UNITS.pressure_from_mpa(1.0)
    assert lam / lam0 == pytest.approx(3600.0 / 86400.0)
