import math
from fractions import Fraction

import numpy as np
import pytest

from app.services.errors import DomainError
from app.services.series_core import (
    PolyInW,
    PowerSeries,
    RationalScalar,
    binomial_series,
    cos_series,
    erf_core_series,
    erf_series,
    exp_series,
    ps_compose,
    ps_mul,
    ps_pow_neg_half,
    ps_reciprocal,
    ps_reversion,
    sin_series,
    sinh_series,
    wallis_moment,
    wallis_ratio,
)

F = Fraction


# ============ RationalScalar ============

def test_even_sqrt2_powers_fold_into_value():
    assert RationalScalar(1, sqrt2_power=2) == RationalScalar(2)
    assert RationalScalar(3, sqrt2_power=3) == RationalScalar(6, sqrt2_power=1)


def test_reciprocal_of_sqrt2_multiple():
    x = RationalScalar(3, sqrt2_power=1)
    assert x.reciprocal() == RationalScalar(F(1, 6), sqrt2_power=1)
    assert x * x.reciprocal() == 1


def test_adding_different_fields_raises():
    with pytest.raises(DomainError):
        RationalScalar(1, pi_power=1) + RationalScalar(1)


def test_zero_adds_to_any_field():
    x = RationalScalar(2, pi_power=1)
    assert RationalScalar(0) + x == x
    assert x - x == 0


def test_float_value():
    assert float(RationalScalar(F(1, 4), pi_power=1, sqrt2_power=1)) == pytest.approx(math.pi * math.sqrt(2) / 4)
    assert float(RationalScalar(2, pi_power=F(-1, 2))) == pytest.approx(2 / math.sqrt(math.pi))


def test_wallis():
    assert wallis_ratio(2) == F(3, 8)
    assert wallis_moment(0) == RationalScalar(F(1, 2), pi_power=1)
    with pytest.raises(DomainError):
        wallis_moment(-1)


# ============ PolyInW ============

def test_poly_trailing_zeros_dropped():
    assert PolyInW([1, 0, 0]).degree == 0
    assert PolyInW([1, 0, 0]) == 1


def test_poly_product_and_evaluate():
    assert PolyInW([1, 1]) * PolyInW([1, -1]) == PolyInW([1, 0, -1])
    assert PolyInW([1, 2, 3]).evaluate(2) == 57


def test_poly_arcsine_moment():
    p = PolyInW([F(1), F(1)])
    assert p.wallis_sum() == F(3, 2)
    assert p.arcsine_moment() == RationalScalar(F(3, 4), pi_power=1)
    assert PolyInW([1.0, 1.0]).arcsine_moment() == pytest.approx(0.75 * math.pi)


# ============ PowerSeries ============

def test_difference_of_squares():
    a = PowerSeries([F(1), F(1)], order=3)
    b = PowerSeries([F(1), F(-1)], order=3)
    assert list(ps_mul(a, b)) == [1, 0, -1, 0]


def test_sinh_squared():
    sq = ps_mul(sinh_series(4), sinh_series(4))
    assert list(sq) == [0, 0, 1, 0, F(1, 3)]
    assert sq.parity == "even"


def test_product_order_is_the_smaller_one():
    assert ps_mul(exp_series(6), exp_series(3)).order == 3


def test_product_matches_float_convolution():
    a, b = exp_series(20), sinh_series(20)
    expected = np.convolve([float(c) for c in a], [float(c) for c in b])[:21]
    got = np.array([float(c) for c in ps_mul(a, b)])
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=0)


def test_exp_times_exp_minus_one_is_one():
    assert ps_mul(exp_series(8), exp_series(8, -1)) == PowerSeries.constant(F(1), 8)


def test_pythagoras():
    total = ps_mul(sin_series(10), sin_series(10)) + ps_mul(cos_series(10), cos_series(10))
    assert total == PowerSeries.constant(F(1), 10)


def test_parity_is_checked():
    with pytest.raises(ValueError):
        PowerSeries([0, 1, 1], parity="odd")


def test_compose_exp_of_square():
    square = PowerSeries([F(0), F(0), F(1)], order=4)
    assert list(ps_compose(exp_series(4), square)) == [1, 0, 1, 0, F(1, 2)]


def test_compose_needs_zero_constant_term():
    with pytest.raises(DomainError):
        ps_compose(exp_series(4), exp_series(4))


def test_compose_sin_of_sinh_numerically():
    series = ps_compose(sin_series(11), sinh_series(11)).to_float()
    assert series(0.3) == pytest.approx(math.sin(math.sinh(0.3)), abs=1e-10)


def test_binomial_minus_half():
    assert list(binomial_series(3, F(-1, 2))) == [1, F(-1, 2), F(3, 8), F(-5, 16)]
    one_plus_x = PowerSeries([F(1), F(1)], order=3)
    assert list(ps_pow_neg_half(one_plus_x)) == [1, F(-1, 2), F(3, 8), F(-5, 16)]


def test_neg_half_power_of_constant():
    assert ps_pow_neg_half(PowerSeries.constant(F(1), 3)) == PowerSeries.constant(F(1), 3)


def test_neg_half_power_multiplies_back():
    a = PowerSeries([F(1), F(1, 3), F(1, 7), F(2, 5)], order=6)
    b = ps_pow_neg_half(a)
    assert ps_mul(ps_mul(b, b), a) == PowerSeries.constant(F(1), 6)


def test_neg_half_power_needs_unit_constant():
    with pytest.raises(DomainError):
        ps_pow_neg_half(PowerSeries([F(2), F(1)], order=2))


def test_secant():
    assert list(ps_reciprocal(cos_series(6))) == [1, 0, F(1, 2), 0, F(5, 24), 0, F(61, 720)]


def test_arcsine_by_reversion():
    arcsin = ps_reversion(sin_series(9))
    assert list(arcsin) == [0, 1, 0, F(1, 6), 0, F(3, 40), 0, F(5, 112), 0, F(35, 1152)]
    assert arcsin.parity == "odd"


def test_reversion_composes_to_identity():
    erf_core = erf_core_series(9)
    assert ps_compose(ps_reversion(erf_core), erf_core) == PowerSeries.variable(9)


def test_reversion_needs_nonzero_slope():
    with pytest.raises(DomainError):
        ps_reversion(PowerSeries([F(0), F(0), F(1)]))


def test_erf_leading_coefficient():
    assert erf_series(3)[1] == RationalScalar(2, pi_power=F(-1, 2))
    assert erf_series(3)[3] == RationalScalar(F(-2, 3), pi_power=F(-1, 2))
