"""
SABR Series Lab - Pricer
Option time values from the kernel representation, Black-Scholes ATM utilities and series prices.

    V(K, T) = 2 sqrt(K S0) e^{-T/8} / (pi^{3/2} sqrt T) * integral_{s_-}^inf e^{-u^2/2T} g(u, s_-) du

All entry points accept a general omega and rescale to omega = 1 first.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import special
from scipy.stats import norm

from app.models.schemas import ImpliedVolResult, ModelParams, PriceResult, QuadSpec
from app.services.errors import ConvergenceError, DomainError
from app.services.payoff_kernel import (
    SQRT2,
    _default_quad,
    eval_g_deficit_with_error,
    eval_g_with_error,
    mckean_tail,
    eval_h,
    u_cutoff,
    weighted_payoff_integral,
)
from app.services.quadrature import quad_panels
from app.services.series_engine import derive_payoff_series, value_series

logger = logging.getLogger(__name__)

IMPLIED_VOL_TOL = 1e-12
COVERED_CALL_FACTOR = 2.0 * SQRT2 / math.pi


def _check_maturity(T: float) -> None:
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")


def _atm_factor(T: float, S0: float) -> float:
    """(2 sqrt 2/pi) S0 e^{-T/8}: maps Vhat to the option time value."""
    return COVERED_CALL_FACTOR * S0 * math.exp(-T / 8.0)


# ============ Quadrature prices ============

def value_function(T: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> Tuple[float, float]:
    """Vhat(T) = integral_0^inf e^{-u^2/2T} g(u) du / sqrt(2 pi T) in omega = 1 units, with its error."""
    quad = _default_quad(quad)
    u_cut, tail = u_cutoff(T, params.unit_sigma0, quad)
    errors = []

    def g(u):
        value, err = eval_g_with_error(u, params, quad)
        errors.append(err)
        return value

    value, err = weighted_payoff_integral(T, g, 0.0, u_cut, quad)
    inner = max(errors, default=0.0)
    return value, err + inner + tail


def price_atm(T: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> PriceResult:
    """ATM call time value C(K=S0) by nested quadrature."""
    _check_maturity(T)
    unit, T_unit = params.rescaled(T)
    vhat, err = value_function(T_unit, unit, quad)
    factor = _atm_factor(T_unit, params.S0)
    price = factor * vhat
    if price < 0:
        logger.warning(f"price_atm T={T:.6g} sigma0={params.sigma0}: negative value {price:.3e} clamped to 0")
        price = 0.0
    logger.debug(f"price_atm T={T:.6g} sigma0={params.sigma0} omega={params.omega}: {price:.17g}")
    return PriceResult(value=price, abs_err_est=factor * err, method="quadrature")


def price_strike(T: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> PriceResult:
    """Call time value at a general strike through g(u, s_-)."""
    _check_maturity(T)
    unit, T_unit = params.rescaled(T)
    s_minus = unit.s_minus
    if s_minus == 0.0:
        return price_atm(T, params, quad)
    quad = _default_quad(quad)
    u_cut, tail = u_cutoff(T_unit, unit.unit_sigma0, quad)
    if u_cut <= s_minus:
        return PriceResult(value=0.0, abs_err_est=tail, method="quadrature")

    def g(u):
        return eval_g_with_error(u, unit, quad, s_minus=s_minus)[0]

    vhat, err = weighted_payoff_integral(T_unit, g, s_minus, u_cut, quad)
    factor = COVERED_CALL_FACTOR * math.sqrt(unit.strike * unit.S0) * math.exp(-T_unit / 8.0)
    price = factor * vhat
    if price < 0:
        logger.warning(f"price_strike T={T:.6g} K={params.strike}: negative value {price:.3e} clamped to 0")
        price = 0.0
    return PriceResult(value=price, abs_err_est=factor * (err + tail), method="quadrature")


def price_double_integral(T: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> PriceResult:
    """Time value from the McKean tail form (2 sqrt(K S0)/pi) integral_{s_-} G(T, s) h(s, s_-) ds."""
    _check_maturity(T)
    quad = _default_quad(quad)
    unit, T_unit = params.rescaled(T)
    s_minus = unit.s_minus
    s_cut, tail = u_cutoff(T_unit, unit.unit_sigma0, quad)
    if s_cut <= s_minus:
        return PriceResult(value=0.0, abs_err_est=tail, method="double_integral")
    a = 0.5 * unit.unit_sigma0
    x_minus = math.sinh(s_minus)
    x_max = math.sinh(s_cut)
    k_max = int(a * math.sqrt(max(x_max ** 2 - x_minus ** 2, 0.0)) / math.pi)
    zeros = np.arcsinh(np.sqrt(x_minus ** 2 + (np.arange(1, k_max + 1) * math.pi / a) ** 2))
    grid = np.concatenate([zeros, np.arange(s_minus, s_cut, math.sqrt(T_unit))[1:]])
    grid = np.unique(grid[(grid > s_minus) & (grid < s_cut)])
    breaks = [s_minus, *grid.tolist(), s_cut]

    def integrand(s):
        return mckean_tail(T_unit, s, quad) * eval_h(s, unit, s_minus)

    value, err = quad_panels(integrand, breaks, quad)
    factor = 2.0 * math.sqrt(unit.strike * unit.S0) / math.pi
    return PriceResult(value=max(factor * value, 0.0), abs_err_est=factor * (err + tail), method="double_integral")


# ============ Black-Scholes ATM ============

def bs_atm_value(T: float, sigma: float) -> float:
    """Erf(sigma sqrt T / 2^{3/2}): ATM Black-Scholes call over S0."""
    if T <= 0 or sigma <= 0:
        raise DomainError(f"bs_atm_value needs T > 0 and sigma > 0, got T={T}, sigma={sigma}")
    return float(special.erf(sigma * math.sqrt(T) / (2.0 * SQRT2)))


def implied_vol(price_over_S0: float, T: float, tol: float = IMPLIED_VOL_TOL, max_iter: int = 200) -> ImpliedVolResult:
    """Invert C/S0 = Erf(x), x = sigma sqrt T / (2 sqrt 2), by Newton with a bisection safeguard."""
    _check_maturity(T)
    p = price_over_S0
    if not 0.0 < p < 1.0:
        raise DomainError(f"ATM price over spot must lie in (0, 1), got {p}")
    lo, hi = 0.0, 1.0
    while special.erf(hi) < p:
        lo, hi = hi, 2.0 * hi
        if hi > 64.0:
            raise ConvergenceError(f"no bracket for price {p}", estimate=hi)
    x = min(max(p * math.sqrt(math.pi) / 2.0, lo), hi)
    for iteration in range(1, max_iter + 1):
        f = special.erf(x) - p
        if f > 0:
            hi = x
        else:
            lo = x
        slope = 2.0 / math.sqrt(math.pi) * math.exp(-x * x)
        step = f / slope if slope > 0 else math.inf
        candidate = x - step
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        converged = abs(candidate - x) <= 4.0 * np.finfo(float).eps * max(abs(x), 1e-300)
        x = candidate
        if converged or hi - lo <= 4.0 * np.finfo(float).eps * hi:
            break
    residual = abs(float(special.erf(x)) - p)
    if residual > tol:
        raise ConvergenceError(f"implied_vol residual {residual:.3e} above {tol}", estimate=x, abs_err=residual)
    return ImpliedVolResult(sigma_bs=2.0 * SQRT2 * x / math.sqrt(T), iterations=iteration, residual=residual)


# ============ Series prices ============

def series_price(T: float, params: ModelParams, N: int) -> PriceResult:
    """ATM time value from the value series truncated after order N; the error is the next term."""
    _check_maturity(T)
    unit, T_unit = params.rescaled(T)
    ps = derive_payoff_series(unit.unit_sigma0, N + 1, exact=False)
    terms = value_series(ps).terms(T_unit)
    factor = _atm_factor(T_unit, params.S0)
    value = factor * float(np.sum(terms[: N + 1]))
    return PriceResult(value=value, abs_err_est=factor * abs(float(terms[N + 1])), method=f"series({N})")


# ============ Covered call ============

def _g_inf_tail(T: float, U: float) -> float:
    """integral_U^inf e^{-u^2/2T} (pi/sqrt 2) cosh(u/2) du / sqrt(2 pi T)."""
    root = math.sqrt(T)
    upper = norm.sf((U - 0.5 * T) / root) + norm.sf((U + 0.5 * T) / root)
    return math.pi / SQRT2 * 0.5 * math.exp(T / 8.0) * upper


def delta_v_with_error(T: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> Tuple[float, float]:
    """Delta V = integral_0^inf e^{-u^2/2T} (g_inf(u) - g(u)) du / sqrt(2 pi T) >= 0, at the money."""
    _check_maturity(T)
    quad = _default_quad(quad)
    unit, T_unit = params.rescaled(T)
    unit = unit.model_copy(update={"K": None})
    u_cut, tail = u_cutoff(T_unit, unit.unit_sigma0, quad)
    a = 0.5 * unit.unit_sigma0
    k_max = min(int(a * math.sinh(u_cut) / math.pi), 4000)
    phase_zeros = np.arcsinh((np.arange(0, k_max + 1) * math.pi + 0.25 * math.pi) / a)

    def deficit(u):
        return eval_g_deficit_with_error(u, unit, quad)[0]

    value, err = weighted_payoff_integral(T_unit, deficit, 0.0, u_cut, quad, points=phase_zeros[phase_zeros < u_cut])
    err += tail + _g_inf_tail(T_unit, u_cut)
    if err > 1e-2 * abs(value):
        logger.warning(
            f"delta_v T={T:.6g} sigma0={params.sigma0}: heavy cancellation, "
            f"value {value:.3e} with error estimate {err:.3e}"
        )
    return value, err


def delta_v(T: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> float:
    return delta_v_with_error(T, params, quad)[0]


def covered_call(T: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> PriceResult:
    """S0 - C(K=S0) = (2 sqrt 2/pi) S0 e^{-T/8} Delta V, without forming S0 - C."""
    value, err = delta_v_with_error(T, params, quad)
    _, T_unit = params.rescaled(T)
    factor = _atm_factor(T_unit, params.S0)
    return PriceResult(value=max(factor * value, 0.0), abs_err_est=factor * err, method="covered_call")
