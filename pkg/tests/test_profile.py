import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatsphere.errors import DomainError
from flatsphere.hermite import ExactPoly, hermite_poly, project
from flatsphere.profile import (ModelParams, correction_poly, cutoff_chi, cutoff_chi_derivs,
                                cutoff_chibar, f_profile, heteroclinic_psi,
                                heteroclinic_psi_prime, kappa_of, phi, phi_derivatives,
                                phi_minus_kappa, potential_V, remainder_R, remainder_R_direct,
                                RemainderOnGrid, s_half, u_star)

P2, P3 = ModelParams(p=2), ModelParams(p=3)


@pytest.mark.parametrize("p,k", [(2, 1.0), (3, 0.7071067812), (1.5, 4.0)])
def test_kappa_values(p, k):
    assert kappa_of(p) == pytest.approx(k, rel=1e-10)
    assert kappa_of(p) ** (p - 1) * (p - 1) == pytest.approx(1.0, abs=1e-12)


def test_kappa_domain():
    with pytest.raises(DomainError):
        kappa_of(1.0)


@pytest.mark.parametrize("kw", [dict(p=0.5), dict(p=6, d=3), dict(d=1), dict(eps0=1.5), dict(A=0.5)])
def test_params_rejected(kw):
    with pytest.raises(DomainError):
        ModelParams(**kw)


def test_subcritical_boundary_accepted():
    ModelParams(p=4, d=3)
    ModelParams(p=5, d=3)


def test_correction_polynomial():
    assert correction_poly(P2) == ExactPoly([-12, 0, 12])
    assert correction_poly(P2) == ExactPoly.monomial(4) - hermite_poly(4)


def test_s_half_bound():
    for prm in (P2, P3, ModelParams(p=1.5)):
        s2 = s_half(prm)
        y = np.linspace(-30, 30, 6001)
        P = 12 * (prm.p - 1) / prm.kappa * (y**2 - 1)
        assert np.min(1 + math.exp(-s2) * P) >= 0.5 - 1e-12


def test_phi_examples():
    assert phi(0.0, 5.0, P2) == pytest.approx(1 - 12 * math.exp(-5), rel=1e-12)
    assert phi(2.0, 10.0, P2) == pytest.approx((1 + 36 * math.exp(-10)) / (1 + 16 * math.exp(-10)), rel=1e-14)
    assert phi(1.3, 60.0, P3) == pytest.approx(P3.kappa, rel=1e-14)


def test_phi_domain_error_reports_location():
    with pytest.raises(DomainError, match="y=0"):
        phi(0.0, 1.0, P2)


@settings(max_examples=40, deadline=None)
@given(st.floats(-15, 15), st.floats(6, 30), st.sampled_from([1.5, 2.0, 3.0]))
def test_phi_minus_kappa_consistent(y, s, p):
    prm = ModelParams(p=p)
    direct = phi(y, s, prm) - prm.kappa
    stable = phi_minus_kappa(y, s, prm)
    assert stable == pytest.approx(direct, abs=1e-13 * prm.kappa)


@settings(max_examples=30, deadline=None)
@given(st.floats(-8, 8), st.floats(7, 14), st.sampled_from([1.5, 2.0, 3.0]))
def test_derivatives_match_finite_differences(y, s, p):
    prm = ModelParams(p=p)
    f, fy, fyy, fs = phi_derivatives(y, s, prm)
    h = 1e-4
    assert fy == pytest.approx((phi(y + h, s, prm) - phi(y - h, s, prm)) / (2 * h), abs=1e-7)
    assert fyy == pytest.approx((phi(y + h, s, prm) - 2 * f + phi(y - h, s, prm)) / h**2, abs=1e-4)
    assert fs == pytest.approx((phi(y, s + h, prm) - phi(y, s - h, prm)) / (2 * h), abs=1e-7)


def test_f_profile_and_u_star():
    assert f_profile(0.0, P3) == pytest.approx(P3.kappa)
    assert f_profile(1.0, P2) == pytest.approx(0.5)
    assert f_profile(1e4, P3) / u_star(1e4, P3) == pytest.approx(1.0, rel=1e-8)
    assert u_star(1.0, P2) == pytest.approx(1.0)
    assert u_star(1.0, P3) == pytest.approx(0.4204482, rel=1e-7)
    for prm in (P2, P3):
        assert u_star(2.0, prm) / u_star(1.0, prm) == pytest.approx(2 ** (-4 / (prm.p - 1)))
    with pytest.raises(DomainError):
        u_star(0.0, P2)


def test_heteroclinic_orbit():
    assert heteroclinic_psi(0.0, P2) == pytest.approx(0.5)
    assert heteroclinic_psi(-50.0, P3) == pytest.approx(P3.kappa)
    s = np.linspace(-5, 5, 201)
    for prm in (P2, P3):
        psi = heteroclinic_psi(s, prm)
        resid = heteroclinic_psi_prime(s, prm) + psi / (prm.p - 1) - psi**prm.p
        assert np.max(np.abs(resid)) <= 1e-10


def test_cutoffs():
    assert cutoff_chi(0.1) == 0.0
    assert cutoff_chi(0.3) == 1.0
    xi = np.linspace(0.125, 0.25, 2001)
    chi, d1, _ = cutoff_chi_derivs(xi)
    assert np.all(np.diff(chi) >= 0)
    assert np.max(np.abs(d1)) <= 32
    assert cutoff_chibar(0.3) == 1.0 and cutoff_chibar(0.8) == 0.0


def test_cutoff_derivatives_numeric():
    xi = np.linspace(0.13, 0.24, 23)
    chi, d1, d2 = cutoff_chi_derivs(xi)
    h = 1e-6
    assert np.allclose(d1, (cutoff_chi(xi + h) - cutoff_chi(xi - h)) / (2 * h), rtol=1e-5, atol=1e-6)
    hh = 1e-4
    assert np.allclose(d2, (cutoff_chi(xi + hh) - 2 * chi + cutoff_chi(xi - hh)) / hh**2, rtol=1e-4, atol=1e-2)


def test_potential_limits():
    assert abs(potential_V(3.0, 40.0, P2)) < 1e-15
    dec = project(lambda y: potential_V(y, 16.0, P2) * math.exp(16.0))
    assert dec.q_low[4] == pytest.approx(-2.0, rel=1e-3)


@pytest.mark.parametrize("prm", [P2, P3, ModelParams(p=1.5)])
def test_remainder_forms_agree(prm):
    y = np.linspace(-6, 6, 41)
    for s in (6.0, 8.0):
        assert np.allclose(remainder_R(y, s, prm), remainder_R_direct(y, s, prm), rtol=1e-6, atol=1e-10)
    grid = RemainderOnGrid(y, prm)
    assert np.allclose(grid(9.0), remainder_R(y, 9.0, prm), rtol=1e-13, atol=0)


def test_remainder_is_order_e_minus_2s():
    y = np.linspace(-3, 3, 13)
    r1 = remainder_R(y, 14.0, P2) * math.exp(28)
    r2 = remainder_R(y, 20.0, P2) * math.exp(40)
    assert np.allclose(r1, r2, rtol=1e-2)
