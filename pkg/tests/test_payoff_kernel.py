import math

import numpy as np
import pytest
from scipy import special

from app.models.schemas import ModelParams, Quadrant, QuadSpec
from app.services.errors import DomainError
from app.services.payoff_kernel import (
    ComplexEval,
    check_lemma1,
    ellipf_imaginary,
    eval_G_complex,
    eval_G_imaginary_singularity,
    eval_g,
    eval_g0,
    eval_g_deficit,
    eval_g_inf,
    eval_h,
    incomplete_ellipf,
    mckean_tail,
    quadrant_of,
    tail_bound,
    u_cutoff,
    weighted_payoff_integral,
)
from app.services.scaling_limit import g_large_sigma_asymptote


# ============ h and g ============

def test_h_is_smooth_at_the_origin(params):
    assert eval_h(1e-6, params) == pytest.approx(0.25, rel=1e-10)
    assert eval_h(2e-4, params) == pytest.approx(math.sin(0.25 * math.sinh(2e-4)) / math.sinh(2e-4), rel=1e-14)
    values = eval_h(np.array([0.0, 0.5, 1.0]), params)
    assert values.shape == (3,)


def test_strike_shifted_h_vanishes_below_s_minus(params):
    assert eval_h(0.2, params, s_minus=0.3) == 0.0
    assert eval_h(0.5, params, s_minus=0.3) > 0.0


def test_g_small_sigma0_is_half_sigma0_times_g0():
    sigma0 = 1e-3
    for u in (0.5, 1.0, 2.0):
        assert eval_g(u, ModelParams(sigma0=sigma0)) == pytest.approx(0.5 * sigma0 * eval_g0(u), rel=1e-5)


def test_g_substitution_matches_algebraic_weight(params):
    for u in (0.3, 1.5):
        direct = eval_g(u, params)
        assert eval_g(u, params, method="algebraic") == pytest.approx(direct, rel=1e-8)
    with pytest.raises(DomainError):
        eval_g(1.0, params, method="simpson")


def test_g_unit_h_matches_elliptic_form(params):
    for u in (0.5, 2.0, 5.0):
        assert eval_g(u, params, unit_h=True) == pytest.approx(eval_g0(u), rel=1e-9)


def test_g_domain(params):
    with pytest.raises(DomainError):
        eval_g(0.0, params)
    with pytest.raises(DomainError):
        eval_g(1.0, params, s_minus=0.2, unit_h=True)


def test_strike_payoff(params):
    assert eval_g(0.2, params, s_minus=0.3) == 0.0
    assert eval_g(1.0, params, s_minus=1e-10) == pytest.approx(eval_g(1.0, params), rel=1e-7)


def test_payoff_bounds():
    sigma0 = 0.5
    for u in (0.5, 1.0, 3.0, 6.0):
        assert eval_g(u, ModelParams(sigma0=sigma0)) <= math.sqrt(2) * sigma0 * u * math.cosh(0.5 * u)
        assert eval_g0(u) <= 2.0 * math.sqrt(2) * u * math.cosh(0.5 * u)


def test_g0_small_u():
    assert eval_g0(1e-7) == pytest.approx(math.pi * 1e-7 / math.sqrt(2))
    assert eval_g0(1e-3) == pytest.approx(math.pi * 1e-3 / math.sqrt(2) * (1 + 5e-6 / 48), rel=1e-10)
    with pytest.raises(DomainError):
        eval_g0(-1.0)


def test_g_inf_scalar_and_array():
    assert eval_g_inf(0.0) == pytest.approx(math.pi / math.sqrt(2))
    np.testing.assert_allclose(eval_g_inf(np.array([0.0, 2.0])), math.pi / math.sqrt(2) * np.cosh([0.0, 1.0]))


def test_deficit_matches_direct_difference():
    params = ModelParams(sigma0=3.0)
    for u in (0.7, 1.5):
        assert eval_g_deficit(u, params) == pytest.approx(eval_g_inf(u) - eval_g(u, params), abs=1e-10)
    with pytest.raises(DomainError):
        eval_g_deficit(1.0, ModelParams(sigma0=3.0, K=1.2))


def test_deficit_follows_the_large_sigma0_wave():
    sigma0 = 100.0
    params = ModelParams(sigma0=sigma0)
    window = np.linspace(0.95, 1.05, 101)
    deficit = np.array([eval_g_deficit(u, params) for u in window])
    amplitude = 2.0 * math.sqrt(math.pi) / math.sqrt(sigma0 * math.sinh(2.0))
    assert np.max(np.abs(deficit)) == pytest.approx(amplitude, rel=0.1)
    wave = eval_g_inf(window) - g_large_sigma_asymptote(window, sigma0)
    assert np.max(np.abs(deficit - wave)) < 0.1 * amplitude


@pytest.mark.slow
def test_large_sigma0_remainder_decays_like_three_halves():
    window = np.linspace(0.9, 1.1, 201)
    envelopes = []
    for sigma0 in (40.0, 160.0, 640.0):
        params = ModelParams(sigma0=sigma0)
        residual = [eval_g(u, params) - g_large_sigma_asymptote(u, sigma0) for u in window]
        envelopes.append(np.max(np.abs(residual)))
    slope = np.polyfit(np.log([40.0, 160.0, 640.0]), np.log(envelopes), 1)[0]
    assert -1.8 <= slope <= -1.2


# ============ Elliptic integrals ============

def test_incomplete_ellipf_matches_scipy():
    for phi, m in ((0.7, 0.3), (4.0, 0.5), (-2.0, 0.9)):
        assert incomplete_ellipf(phi, m) == pytest.approx(special.ellipkinc(phi, m), rel=1e-12)
    with pytest.raises(DomainError):
        incomplete_ellipf(1.4, 2.0)


def test_ellipf_imaginary_is_the_gudermannian_form():
    phi, m = 0.8, 0.3
    gd = math.atan(math.sinh(phi))
    assert ellipf_imaginary(phi, m) == pytest.approx(special.ellipkinc(gd, 1.0 - m), rel=1e-12)


# ============ Complex continuation ============

def test_quadrants():
    assert quadrant_of(1 + 1j) is Quadrant.Q1
    assert quadrant_of(-1 + 1j) is Quadrant.Q2
    assert quadrant_of(-1 - 1j) is Quadrant.Q3
    assert quadrant_of(1 - 1j) is Quadrant.Q4


def test_G_on_the_real_axis_is_g(params):
    assert eval_G_complex(1.2, params) == pytest.approx(eval_g(1.2, params))
    assert eval_G_complex(-1.2, params) == pytest.approx(-eval_g(1.2, params))


@pytest.mark.parametrize("u", [round(0.1 * k, 1) for k in range(1, 31)])
def test_G_just_above_the_real_axis_is_g(u, params):
    G = eval_G_complex(complex(u, 1e-7), params)
    assert G.real == pytest.approx(eval_g(u, params), rel=1e-8)


def test_G_is_analytic_across_the_real_axis(params):
    eps, h = 1e-3, 1e-4
    G = eval_G_complex(complex(1.0, eps), params)
    slope = (eval_g(1.0 + h, params) - eval_g(1.0 - h, params)) / (2 * h)
    assert G.real == pytest.approx(eval_g(1.0, params), rel=1e-5)
    assert G.imag / eps == pytest.approx(slope, rel=1e-4)


def test_G_symmetries(params):
    u = complex(0.8, 1.1)
    G = eval_G_complex(u, params)
    assert eval_G_complex(u.conjugate(), params) == pytest.approx(G.conjugate())
    assert eval_G_complex(-u, params) == pytest.approx(-G)
    point = ComplexEval.at(-u.conjugate(), params)
    assert point.quadrant is Quadrant.Q2
    assert point.value == pytest.approx(-G.conjugate())


@pytest.mark.slow
def test_G_symmetries_on_random_strip_points(params):
    rng = np.random.default_rng(7)
    points = rng.uniform(-3.0, 3.0, 100) + 1j * rng.uniform(-3.0, 3.0, 100)
    for u in points:
        u = complex(u)
        G = eval_G_complex(u, params)
        assert eval_G_complex(-u, params) == pytest.approx(-G, rel=1e-10, abs=1e-14)
        assert eval_G_complex(u.conjugate(), params) == pytest.approx(G.conjugate(), rel=1e-10, abs=1e-14)


def test_G_matches_series_inside_the_disk(params):
    from app.services.series_engine import derive_payoff_series

    a = derive_payoff_series(0.5, 30, exact=False).a_float()
    u = complex(0.4, 0.9)
    series = 0.5 * sum(c * u ** (2 * k + 1) for k, c in enumerate(a))
    assert eval_G_complex(u, params) == pytest.approx(series, rel=1e-9)


def test_G_outside_the_strip_is_rejected(params):
    with pytest.raises(DomainError):
        eval_G_complex(complex(0.5, math.pi), params)


def test_G_on_the_imaginary_axis_small_sigma0():
    sigma0 = 0.01
    params = ModelParams(sigma0=sigma0)
    for y in (1.5, 2.5):
        G = eval_G_complex(complex(0.0, y), params)
        expected = math.sqrt(2) * 0.5 * sigma0 * math.sin(y) * special.ellipk(math.sin(0.5 * y) ** 2)
        assert abs(G.real) < 1e-12
        assert G.imag == pytest.approx(expected, rel=1e-4)


def test_G_logarithmic_singularity(params):
    for y in (2.9, 3.0, 3.1):
        G = eval_G_complex(complex(0.0, y), params)
        assert G.imag == pytest.approx(eval_G_imaginary_singularity(y, params), rel=0.05)
    with pytest.raises(DomainError):
        eval_G_imaginary_singularity(math.pi, params)


@pytest.mark.parametrize("w", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
def test_half_strip_avoids_the_cut(w):
    assert check_lemma1(w, U=5.0, nx=200, ny=200)


def test_half_strip_check_needs_w_in_the_unit_interval():
    with pytest.raises(DomainError):
        check_lemma1(1.5)


# ============ Kernel tail and Gaussian integrals ============

def test_mckean_tail_is_one_at_the_origin():
    for t in (0.1, 0.5, 2.0):
        assert mckean_tail(t, 0.0) == pytest.approx(1.0, rel=1e-10)


def test_mckean_tail_decreases_in_s():
    values = [mckean_tail(0.5, s) for s in (0.0, 0.5, 1.0, 2.0)]
    assert all(b < a for a, b in zip(values, values[1:]))
    with pytest.raises(DomainError):
        mckean_tail(0.5, -1.0)


def test_tail_bound_decreases_with_cutoff():
    assert tail_bound(0.5, 0.3, 4.0) < tail_bound(0.5, 0.3, 2.0)
    with pytest.raises(DomainError):
        tail_bound(0.0, 0.3, 2.0)


def test_u_cutoff(quad):
    u_cut, tail = u_cutoff(0.5, 0.3, quad)
    assert u_cut < max(8 * math.sqrt(0.5), math.pi) + quad.u_margin
    assert tail <= 2e-2 * quad.abs_tol
    assert u_cutoff(0.5, 0.3, QuadSpec(u_max=3.0))[0] == 3.0


def test_weighted_integral_of_u():
    T = 1.0
    value, err = weighted_payoff_integral(T, lambda u: u, 0.0, 20.0)
    assert value == pytest.approx(math.sqrt(T / (2 * math.pi)), rel=1e-10)
    assert err < 1e-8


def test_weighted_integral_accepts_array_break_points():
    T = 1.0
    points = np.array([0.3, 1.7, 2.9])
    value, _ = weighted_payoff_integral(T, lambda u: u, 0.0, 20.0, points=points)
    assert value == pytest.approx(math.sqrt(T / (2 * math.pi)), rel=1e-10)
    empty, _ = weighted_payoff_integral(T, lambda u: u, 0.0, 20.0, points=np.array([]))
    assert empty == pytest.approx(value, rel=1e-12)
