import math

import pytest
from scipy import special

from app.models.schemas import ModelParams
from app.services.errors import DomainError
from app.services.pricer import (
    bs_atm_value,
    covered_call,
    delta_v,
    implied_vol,
    price_atm,
    price_double_integral,
    price_strike,
    series_price,
)


# ============ Black-Scholes ATM ============

def test_bs_atm_value():
    assert bs_atm_value(1.0, 1.0) == pytest.approx(special.erf(2 ** -1.5), rel=1e-15)
    with pytest.raises(DomainError):
        bs_atm_value(0.0, 0.3)


def test_implied_vol_inverts_bs():
    p = bs_atm_value(0.5, 0.3)
    result = implied_vol(p, 0.5)
    assert result.sigma_bs == pytest.approx(0.3, rel=1e-10)
    assert result.residual <= 1e-12


def test_implied_vol_domain():
    with pytest.raises(DomainError):
        implied_vol(1.0, 0.5)
    with pytest.raises(DomainError):
        implied_vol(0.0, 0.5)
    with pytest.raises(DomainError):
        implied_vol(0.1, 0.0)


# ============ Quadrature prices ============

def test_atm_implied_vol_follows_the_short_maturity_expansion():
    T, sigma0 = 0.25, 0.2
    w = sigma0 * sigma0
    c = [
        1.0,
        1.0 / 6.0,
        (-1.0 - 15.0 * w) / 180.0,
        (4.0 - 161.0 * w) / 1680.0,
        (-579.0 - 29980.0 * w + 7560.0 * w * w) / 453600.0,
    ]
    variance = w * sum(ck * T ** k for k, ck in enumerate(c))
    price = price_atm(T, ModelParams(sigma0=sigma0))
    assert price.method == "quadrature"
    assert implied_vol(price.value, T).sigma_bs == pytest.approx(math.sqrt(variance), abs=1e-5)


def test_series_price_matches_quadrature():
    T, params = 0.1, ModelParams(sigma0=0.5)
    series = series_price(T, params, 12)
    assert series.method == "series(12)"
    assert series.value == pytest.approx(price_atm(T, params).value, rel=1e-8)
    assert series.abs_err_est < 1e-8 * series.value


def test_omega_rescaling():
    T = 0.3
    scaled = price_atm(T, ModelParams(sigma0=0.6, omega=2.0)).value
    assert scaled == pytest.approx(price_atm(4 * T, ModelParams(sigma0=0.3)).value, rel=1e-12)


def test_at_the_money_strike_falls_back_to_atm():
    result = price_strike(0.5, ModelParams(sigma0=0.4, K=1.0))
    assert result.method == "quadrature"
    assert result.value == pytest.approx(price_atm(0.5, ModelParams(sigma0=0.4)).value)


def test_double_integral_matches_strike_price():
    T = 0.5
    params = ModelParams(sigma0=0.4, K=1.1)
    direct = price_strike(T, params)
    double = price_double_integral(T, params)
    assert double.method == "double_integral"
    assert double.value == pytest.approx(direct.value, rel=1e-6)


def test_double_integral_at_the_money():
    T = 0.5
    params = ModelParams(sigma0=0.4)
    assert price_double_integral(T, params).value == pytest.approx(price_atm(T, params).value, rel=1e-6)


@pytest.mark.slow
@pytest.mark.parametrize("T", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("sigma0", [0.1, 0.5, 1.0])
def test_double_integral_grid_at_the_money(T, sigma0):
    params = ModelParams(sigma0=sigma0)
    assert price_double_integral(T, params).value == pytest.approx(price_atm(T, params).value, rel=1e-6)


def test_strike_price_decreases_with_strike():
    T = 0.5
    values = [price_strike(T, ModelParams(sigma0=0.4, K=K)).value for K in (1.05, 1.1, 1.2)]
    assert values[0] > values[1] > values[2] > 0


def test_prices_need_positive_maturity():
    with pytest.raises(DomainError):
        price_atm(0.0, ModelParams(sigma0=0.3))
    with pytest.raises(DomainError):
        series_price(-1.0, ModelParams(sigma0=0.3), 4)


# ============ Covered call ============

def test_covered_call_complements_the_call():
    T, params = 0.5, ModelParams(sigma0=2.0)
    total = covered_call(T, params).value + price_atm(T, params).value
    assert total == pytest.approx(params.S0, abs=1e-8)


def test_delta_v_is_nonnegative():
    for sigma0 in (0.5, 5.0):
        assert delta_v(0.5, ModelParams(sigma0=sigma0)) >= 0.0


def test_covered_call_ignores_the_strike():
    T = 0.2
    assert covered_call(T, ModelParams(sigma0=3.0, K=1.3)).value == pytest.approx(
        covered_call(T, ModelParams(sigma0=3.0)).value
    )
