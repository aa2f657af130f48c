import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpathdim.propagator import (
    DIMENSIONLESS,
    PHYSICAL,
    PHYSICAL_LENGTH_FM,
    SOLENOID_DIAMETER_FM,
    ExperimentGeometry,
    PhysParams,
    PolarPair,
    ab_cross_section,
    ab_propagator,
    ab_propagator_many,
    bessel_argument,
    de_broglie,
    free_exact,
    free_partial_wave,
    semiclassical,
    to_polar,
    winding_sector_free,
)

P = DIMENSIONLESS


def pair(h, L=2.0):
    return to_polar(ExperimentGeometry(L, h))


def test_to_polar_examples():
    pp = pair(0.0)
    assert (pp.r_in, pp.r_fi) == (1.0, 1.0)
    assert pp.theta_in == pytest.approx(math.pi)
    assert pp.theta_fi == 0.0
    pp = pair(1.0)
    assert pp.r_in == pytest.approx(math.sqrt(2))
    assert pp.dtheta == pytest.approx(-math.pi / 2)
    assert abs(pair(1e9).dtheta) < 1e-8


@given(st.floats(0.0, 1e3), st.floats(1e-3, 1e3))
def test_to_polar_angle_formula(h, L):
    pp = pair(h, L)
    assert pp.dtheta == pytest.approx(2 * math.atan(2 * h / L) - math.pi, abs=1e-12)
    assert -math.pi < pp.theta_in <= math.pi and -math.pi < pp.theta_fi <= math.pi


def test_polar_pair_wraps_angles():
    pp = PolarPair(1.0, -math.pi, 1.0, 3 * math.pi + 0.5)
    assert pp.theta_in == pytest.approx(math.pi)
    assert pp.theta_fi == pytest.approx(-math.pi + 0.5)


def test_free_exact_anchor_value():
    # closed form: exp(i mu d^2 / 2 hbar T) mu / (2 pi i hbar T) with d = 2
    ref = 1 / (2j * math.pi * 10) * cmath.exp(1j * 4 / 20)
    for h in range(11):
        assert free_exact(P, pair(float(h))) == pytest.approx(ref, rel=1e-14)
    k = free_exact(P, pair(0.0))
    assert (round(k.real, 10), round(k.imag, 10)) == (0.0031619206, -0.0155982440)


def test_free_exact_coincident_and_chord_only():
    pp = PolarPair(1.3, 0.4, 1.3, 0.4)
    assert free_exact(P, pp) == P.prefactor
    assert free_exact(P, pair(3.0)) == pytest.approx(free_exact(P, pair(7.0)), rel=1e-14)
    assert free_exact(P, pair(3.0), normalize=True) == pytest.approx(free_exact(P, pair(3.0)) / P.prefactor)


def test_h_independence_to_machine_precision():
    vals = np.array([free_exact(P, pair(float(h))) for h in range(11)])
    assert np.max(np.abs(vals - vals[0])) <= 4 * np.finfo(float).eps * abs(vals[0])


def test_partial_wave_converges_to_exact():
    for h in np.linspace(0, 10, 21):
        pp = pair(h)
        assert abs(free_partial_wave(P, pp, 20) - free_exact(P, pp)) < 1e-6


def test_partial_wave_error_monotone_after_turnover():
    pp = pair(4.0)
    errs = [abs(free_partial_wave(P, pp, m) - free_exact(P, pp)) for m in range(0, 25)]
    turn = int(np.argmax(errs))
    tail = errs[turn:]
    assert all(b <= a * (1 + 1e-9) + 1e-17 for a, b in zip(tail, tail[1:]))


def test_partial_wave_m0_single_term():
    pp = pair(1.0)
    x = bessel_argument(P, pp)
    rad = cmath.exp(1j * P.mass_mu * (pp.r_in**2 + pp.r_fi**2) / (2 * P.hbar * P.time_T))
    ref = P.prefactor * rad * float(mpmath.besselj(0, x))
    assert free_partial_wave(P, pp, 0) == pytest.approx(ref, rel=1e-13)


def _direct_sum(p, pp, alpha, m_max):
    x = bessel_argument(p, pp)
    total = 0
    for m in range(-m_max, m_max + 1):
        nu = abs(m - alpha)
        total += cmath.exp(1j * m * pp.dtheta) * complex(mpmath.besseli(nu, -1j * x))
    rad = cmath.exp(1j * p.mass_mu * (pp.r_in**2 + pp.r_fi**2) / (2 * p.hbar * p.time_T))
    return p.prefactor * rad * total


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.5, 1.0, 2.75, 7.2, -1.4])
@pytest.mark.parametrize("h", [0.0, 2.5, 9.0])
def test_ab_against_mpmath_modified_bessel(alpha, h):
    pp = pair(h)
    assert ab_propagator(P, pp, alpha, 12) == pytest.approx(_direct_sum(P, pp, alpha, 12), rel=1e-11)


def test_ab_alpha_zero_is_free_partial_wave():
    pp = pair(2.0)
    for m in (0, 3, 20):
        assert ab_propagator(P, pp, 0.0, m) == free_partial_wave(P, pp, m)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_integer_flux_reduction(n):
    for h in (0.0, 1.0, 5.0, 10.0):
        pp = pair(h)
        ab = ab_propagator(P, pp, float(n), 50)
        assert abs(ab - semiclassical(P, pp, float(n))) < 1e-6
        assert abs(ab - cmath.exp(1j * n * pp.dtheta) * free_exact(P, pp)) < 1e-6


@given(st.floats(-3.0, 3.0), st.floats(0.0, 10.0))
def test_alpha_shift_covariance(alpha, h):
    pp = pair(h)
    a = ab_propagator(P, pp, alpha + 1.0, 50)
    b = cmath.exp(1j * pp.dtheta) * ab_propagator(P, pp, alpha, 50)
    assert abs(a - b) <= 1e-8 * abs(P.prefactor)


def test_many_matches_single():
    pairs = [pair(h) for h in (0.0, 3.0, 8.0)]
    alphas = [0.1, 1.5, 2.9]
    many = ab_propagator_many(P, pairs, alphas, 30)
    for k, pp, a in zip(many, pairs, alphas):
        assert k == ab_propagator(P, pp, a, 30)


def test_large_h_decay_half_flux():
    diffs = [abs(ab_propagator(P, pair(h), 0.5) - semiclassical(P, pair(h), 0.5)) for h in (2, 4, 6, 8, 10)]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))


def test_semiclassical_examples():
    pp = pair(1.0)
    assert semiclassical(P, pp, 0.0) == free_exact(P, pp)
    for a in (0.2, 1.7):
        assert abs(semiclassical(P, pp, a)) == pytest.approx(abs(free_exact(P, pp)))
    assert semiclassical(P, pp, 1.0) == pytest.approx(free_exact(P, pp) * cmath.exp(-0.5j * math.pi))


def test_winding_sector_depends_on_big_theta_only():
    pp = pair(1.5)
    shifted = PolarPair(pp.r_in, pp.theta_in, pp.r_fi, pp.theta_fi)
    a = winding_sector_free(P, pp, 0)
    # same Theta from n_w = 1 and dtheta - 2 pi
    fake = PolarPair(pp.r_in, 0.0, pp.r_fi, pp.dtheta - 2 * math.pi + 2 * math.pi)
    b = winding_sector_free(P, PolarPair(pp.r_in, 0.0, pp.r_fi, pp.dtheta), 0)
    assert a == pytest.approx(b, rel=1e-12)
    assert fake.dtheta == pytest.approx(pp.dtheta)
    c = winding_sector_free(P, PolarPair(pp.r_in, math.pi / 2, pp.r_fi, math.pi / 2 + pp.dtheta), 0)
    assert c == pytest.approx(a, rel=1e-12)
    assert shifted == pp


def test_winding_sector_agrees_with_quad_oracle():
    pp = pair(2.0)
    x = bessel_argument(P, pp)
    big = pp.dtheta + 2 * math.pi
    f = lambda lam: 2 * mpmath.cos(lam * big) * mpmath.exp(-0.5j * mpmath.pi * lam) * mpmath.besselj(lam, x)
    ref = complex(mpmath.quad(f, mpmath.linspace(0, 60, 61)))
    rad = cmath.exp(1j * (pp.r_in**2 + pp.r_fi**2) / 20)
    got = winding_sector_free(P, pp, 1, normalize=True)
    assert got == pytest.approx(rad * ref, rel=1e-9)


def _poisson_sum(pp, n, alpha=0.0):
    return sum(
        cmath.exp(1j * alpha * (pp.dtheta + 2 * math.pi * k)) * winding_sector_free(P, pp, k) for k in range(-n, n + 1)
    )


@pytest.mark.parametrize("h", [0.0, 1.0, 4.0])
def test_poisson_sum_over_windings_gives_free(h):
    pp = pair(h)
    exact = free_exact(P, pp)
    s80 = _poisson_sum(pp, 80)
    assert abs(s80 - exact) < 1e-4
    # the tail decays like 1/N from the |lambda| kink; Richardson removes it
    s40 = _poisson_sum(pp, 40)
    assert abs(2 * s80 - s40 - exact) < 1e-5


def test_winding_weighted_sum_gives_ab():
    pp = pair(1.0)
    ab = ab_propagator(P, pp, 0.5, 50)
    s = _poisson_sum(pp, 80, 0.5)
    assert abs(s - ab) < 1e-4


def test_winding_sector_residual_and_validation():
    val, res = winding_sector_free(P, pair(1.0), 2, return_residual=True)
    assert res < 1e-10
    with pytest.raises(ValueError):
        winding_sector_free(P, pair(1.0), 0, lambda_cut=0)


def test_cross_section():
    assert ab_cross_section(1.0, 2.0, 0.0) == 0.0
    assert ab_cross_section(math.pi, 3.0, 0.5) == pytest.approx(1 / (2 * math.pi * 3.0))
    assert ab_cross_section(0.7, 1.1, 0.3) == pytest.approx(ab_cross_section(0.7, 1.1, 1.3))
    with pytest.raises(ValueError):
        ab_cross_section(0.0, 1.0, 0.5)


def test_de_broglie_anchors():
    assert de_broglie(P, 1.0) == pytest.approx(10 * math.pi)
    lam = de_broglie(PHYSICAL, 0.5 * PHYSICAL_LENGTH_FM)
    assert lam == pytest.approx(3.63e13, rel=0.01)
    assert 2 * math.pi * SOLENOID_DIAMETER_FM / lam == pytest.approx(0.86e-3, rel=0.02)
    assert 2 * math.pi * 100 * SOLENOID_DIAMETER_FM / lam == pytest.approx(0.86e-1, rel=0.02)


def test_physparams_validation():
    with pytest.raises(ValueError):
        PhysParams(mass_mu=0.0)
    with pytest.raises(ValueError):
        PhysParams(time_T=-1.0)
    with pytest.raises(ValueError):
        ExperimentGeometry(0.0, 1.0)
    assert PhysParams(charge_q=-2.0).flux_coupling < 0
