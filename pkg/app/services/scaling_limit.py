"""
SABR Series Lab - Scaling Limit
Large-sigma0 limit at fixed tau = sigma0 omega T / 2: the lambda(tau) solver, the closed form
Sigma_hat^2(tau), its Taylor series and radius, and the saddle-point asymptotics of Delta V.

    lambda / cos(lambda) = tau,   0 <= lambda < pi/2
    Sigma_hat^2(tau) = sin(2 lambda)/lambda - (1 + cos(2 lambda))/2
    phi(i lambda) = (2 sin(lambda) - lambda cos(lambda)) / 4 = tau Sigma_hat^2(tau) / 4
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import optimize

from app.config import get_settings
from app.models.schemas import ModelParams, QuadSpec, RadiusResult, RootTestMode, ScalingCheckRow, ScalingState
from app.services.errors import ConvergenceError, DomainError
from app.services.payoff_kernel import SQRT2, _default_quad, eval_g_inf
from app.services.pricer import COVERED_CALL_FACTOR, covered_call
from app.services.quadrature import adaptive_panels
from app.services.series_core import (
    PowerSeries,
    cos_series,
    ps_compose,
    ps_reciprocal,
    ps_reversion,
)
from app.services.series_engine import extrapolate_radius, ratio_test, root_test

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi
SIGMA_HAT_SERIES_CUTOFF = 1e-4
# e^{-46} is below double precision relative to the O(1) integrand scale
GAUSSIAN_CUTOFF_EXPONENT = 46.0
SQRT_I = complex(math.cos(math.pi / 4), math.sin(math.pi / 4))


# ============ lambda(tau) ============

def solve_lambda(tau: float, max_iter: int = 100) -> float:
    """Root of lambda - tau cos(lambda) on [0, pi/2) by Newton, bisecting whenever a step leaves the bracket."""
    if tau < 0:
        raise DomainError(f"solve_lambda needs tau >= 0, got {tau}")
    if tau == 0:
        return 0.0
    lo, hi = 0.0, HALF_PI
    lam = min(tau, HALF_PI - 1.0 / tau)
    if not 0.0 < lam < HALF_PI:
        lam = min(tau, 1.0)
    for _ in range(max_iter):
        f = lam - tau * math.cos(lam)
        if f == 0.0:
            return lam
        if f > 0:
            hi = lam
        else:
            lo = lam
        candidate = lam - f / (1.0 + tau * math.sin(lam))
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - lam) <= 2e-16 * max(lam, 1e-300):
            return candidate
        lam = candidate
    raise ConvergenceError(f"solve_lambda did not converge for tau={tau}", estimate=lam)


_solve_lambda_array = np.vectorize(solve_lambda, otypes=[float])


def sigma_hat_sq(tau: float) -> float:
    """Closed-form scaled implied variance; the series 1 - tau^2/3 + 4 tau^4/15 below tau = 1e-4."""
    if tau < 0:
        raise DomainError(f"sigma_hat_sq needs tau >= 0, got {tau}")
    if tau < SIGMA_HAT_SERIES_CUTOFF:
        t2 = tau * tau
        return 1.0 - t2 / 3.0 + 4.0 * t2 * t2 / 15.0
    lam = solve_lambda(tau)
    return math.sin(2.0 * lam) / lam - 0.5 * (1.0 + math.cos(2.0 * lam))


def phi_saddle(tau: float) -> float:
    """phi_+(i lambda) = (2 sin lambda - lambda cos lambda) / 4."""
    lam = solve_lambda(tau)
    return 0.25 * (2.0 * math.sin(lam) - lam * math.cos(lam))


def saddle_prefactor(tau: float) -> float:
    """Saddle prefactor C, defined by Re[sqrt(i) I_+] = C e^{-sigma0 phi_+(i lambda)} / sqrt(sigma0).

    The Re sqrt(i) factor is part of that definition, so C itself carries none:
    C = sqrt(pi / (2 phi''(i lambda) sin 2 lambda)) with phi'' = (1/tau + sin lambda)/2,
    which with 1/tau = cos(lambda)/lambda reads
    sqrt(pi lambda / (2 sin lambda cos^2 lambda (1 + lambda tan lambda))).
    """
    if tau <= 0:
        raise DomainError(f"the saddle prefactor is degenerate at tau={tau}")
    lam = solve_lambda(tau)
    c = math.cos(lam)
    return math.sqrt(math.pi * lam / (2.0 * math.sin(lam) * c * c * (1.0 + lam * math.tan(lam))))


def scaling_state(tau: float) -> ScalingState:
    lam = solve_lambda(tau)
    return ScalingState(
        tau=tau,
        lam=lam,
        sigma_hat_sq=sigma_hat_sq(tau),
        phi_saddle=phi_saddle(tau),
        C_saddle=saddle_prefactor(tau) if tau > 0 else None,
    )


def implied_vol_scaling(T: float, sigma0: float, omega: float = 1.0) -> float:
    """Leading large-sigma0 ATM implied volatility sigma0 sqrt(Sigma_hat^2(omega sigma0 T / 2))."""
    if T <= 0 or sigma0 <= 0 or omega <= 0:
        raise DomainError(f"implied_vol_scaling needs positive arguments, got T={T}, sigma0={sigma0}, omega={omega}")
    return sigma0 * math.sqrt(sigma_hat_sq(0.5 * omega * sigma0 * T))


# ============ Series in tau ============

def _sigma_hat_of_lambda(N: int) -> PowerSeries:
    """sin(2 lambda)/lambda - (1 + cos(2 lambda))/2 as an exact series in lambda."""
    coeffs = [Fraction(0)] * (N + 1)
    for n in range(0, N // 2 + 1):
        sign = (-1) ** n
        coeffs[2 * n] += Fraction(sign * 2 ** (2 * n + 1), math.factorial(2 * n + 1))
        if n == 0:
            coeffs[0] -= 1
        else:
            coeffs[2 * n] -= Fraction(sign * 2 ** (2 * n - 1), math.factorial(2 * n))
    return PowerSeries(coeffs, N, parity="even")


@lru_cache(maxsize=8)
def lambda_series(N: int) -> PowerSeries:
    """lambda(tau) by reversion of tau(lambda) = lambda / cos(lambda)."""
    tau_of_lambda = PowerSeries.variable(N) * ps_reciprocal(cos_series(N))
    return ps_reversion(tau_of_lambda)


@lru_cache(maxsize=8)
def sigma_hat_series(N: Optional[int] = None) -> PowerSeries:
    """Exact Taylor coefficients of Sigma_hat^2 in tau up to order N."""
    settings = get_settings()
    N = settings.series_order if N is None else N
    if N < 1 or N > settings.max_series_order:
        raise DomainError(f"series order must lie in [1, {settings.max_series_order}], got {N}")
    return ps_compose(_sigma_hat_of_lambda(N), lambda_series(N))


def sigma_hat_series_value(tau: float, N: Optional[int] = None) -> float:
    return float(sigma_hat_series(N).to_float()(tau))


def convergence_radius(tol: float = 1e-15) -> RadiusResult:
    """Positive root y0 of y tanh y = 1 and the tau-radius y0 / cosh y0."""
    y = 1.2
    for _ in range(50):
        t = math.tanh(y)
        step = (y * t - 1.0) / (t + y * (1.0 - t * t))
        y -= step
        if abs(step) <= tol:
            break
    tau0 = y / math.cosh(y)
    return RadiusResult(y0=y, tau0=tau0, T_c_times_omega_sigma0=2.0 * tau0)


def series_radius_estimates(N: Optional[int] = None) -> Dict[str, float]:
    """Radius of the tau-series from its coefficients: stride-2 ratio test and root test."""
    coeffs = sigma_hat_series(N).coeffs
    return {
        "ratio": extrapolate_radius(ratio_test(coeffs, stride=2), method="quadratic"),
        "root": extrapolate_radius(root_test(coeffs, RootTestMode.VALUE), method="log"),
    }


@dataclass(frozen=True)
class CriticalPoint:
    """Zero of d/dz (z / cos z) and its critical value."""
    z: complex
    value: complex

    @property
    def modulus(self) -> float:
        return abs(self.value)


def critical_points(k_max: int = 3) -> List[CriticalPoint]:
    """Critical points of z / cos z: +-i y0 and the real roots of tan z = -1/z for 1 <= k <= k_max, by modulus."""
    radius = convergence_radius()
    points = [CriticalPoint(z=s * 1j * radius.y0, value=s * 1j * radius.tau0) for s in (1, -1)]

    def f(x):
        return math.cos(x) + x * math.sin(x)

    for k in range(1, k_max + 1):
        x = optimize.brentq(f, (k - 0.5) * math.pi, k * math.pi, xtol=1e-14)
        value = x / math.cos(x)
        points += [CriticalPoint(z=complex(x), value=complex(value)), CriticalPoint(z=complex(-x), value=complex(-value))]
    return sorted(points, key=lambda p: p.modulus)


# ============ Steepest-descent geometry ============

def _curve_height(tau: float, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(x == 0.0, 1.0, np.sinh(x) / np.where(x == 0.0, 1.0, x))
    return _solve_lambda_array(tau * ratio)


def contour_samples(tau: float, x_grid: Sequence[float]) -> np.ndarray:
    """y(x) = lambda(tau sinh(x)/x): the Im phi_+ = 0 curve through the saddle at i lambda(tau)."""
    if tau <= 0:
        raise DomainError(f"contour_samples needs tau > 0, got {tau}")
    return _curve_height(tau, x_grid)


def _curve_slope(tau: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dy/dx along the curve: lambda'(t) t'(x) with lambda'(t) = cos(lambda)/(1 + t sin(lambda))."""
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    dt_dx = np.where(small, tau * (x / 3.0 + x ** 3 / 30.0), tau * (safe * np.cosh(safe) - np.sinh(safe)) / safe ** 2)
    t = np.where(small, tau * (1.0 + x * x / 6.0), tau * np.sinh(safe) / safe)
    return np.cos(y) / (1.0 + t * np.sin(y)) * dt_dx


# ============ Large-sigma0 asymptotics ============

def g_large_sigma_asymptote(u, sigma0: float):
    """g_inf(u) - 2 sqrt(pi) cos(sigma0 sinh(u)/2 + pi/4) / sqrt(sigma0 sinh 2u)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0) or sigma0 <= 0:
        raise DomainError("g_large_sigma_asymptote needs u > 0 and sigma0 > 0")
    wave = 2.0 * math.sqrt(math.pi) * np.cos(0.5 * sigma0 * np.sinh(u_arr) + 0.25 * math.pi) / np.sqrt(sigma0 * np.sinh(2.0 * u_arr))
    out = eval_g_inf(u_arr) - wave
    return float(out) if np.ndim(u) == 0 else out


def saddle_asymptote(tau: float, sigma0: float) -> float:
    """Leading asymptotic C e^{-sigma0 phi(i lambda)} / sqrt(tau sigma0) of Delta V."""
    if tau <= 0:
        raise DomainError(f"saddle_asymptote is degenerate at tau={tau}")
    if sigma0 <= 0:
        raise DomainError(f"saddle_asymptote needs sigma0 > 0, got {sigma0}")
    return saddle_prefactor(tau) * math.exp(-sigma0 * phi_saddle(tau)) / math.sqrt(tau * sigma0)


def ansatz_delta_v(tau: float, sigma0: float, quad: Optional[QuadSpec] = None) -> float:
    """(1/sqrt tau) integral_0^inf e^{-sigma0 u^2/4tau} cos(sigma0 sinh(u)/2 + pi/4) du / sqrt(sinh 2u).

    Integrated in v with u = v^2, panels at the zeros of the cosine.
    """
    if tau <= 0 or sigma0 <= 0:
        raise DomainError(f"ansatz_delta_v needs tau > 0 and sigma0 > 0, got tau={tau}, sigma0={sigma0}")
    quad = _default_quad(quad)
    u_max = math.sqrt(4.0 * tau * GAUSSIAN_CUTOFF_EXPONENT / sigma0)
    a = 0.5 * sigma0
    k_max = int(a * math.sinh(u_max) / math.pi) + 1
    zeros = np.arcsinh((np.arange(k_max + 1) * math.pi + 0.25 * math.pi) / a)
    v_breaks = np.sqrt(np.concatenate([[0.0], zeros[zeros < u_max], [u_max]]))

    def integrand(v):
        u = v * v
        safe = np.where(v > 1e-8, v, 1.0)
        weight = np.where(v > 1e-8, 2.0 * safe / np.sqrt(np.sinh(2.0 * safe * safe)), SQRT2)
        return np.exp(-sigma0 * u * u / (4.0 * tau)) * np.cos(a * np.sinh(u) + 0.25 * math.pi) * weight

    value, err = adaptive_panels(integrand, v_breaks, quad.abs_tol, quad.rel_tol, quad.max_subdiv)
    logger.debug(f"ansatz_delta_v tau={tau} sigma0={sigma0}: {value / math.sqrt(tau):.6e} (err {err:.1e})")
    return value / math.sqrt(tau)


@dataclass(frozen=True)
class SteepestDescentResult:
    """Pieces of sqrt(i) I_+ + sqrt(-i) I_- along the deformed contour."""
    vertical_plus: complex
    curve_plus: complex
    vertical_minus: complex
    curve_minus: complex
    delta_v: float
    imaginary_residual: float

    @property
    def total(self) -> complex:
        return self.vertical_plus + self.curve_plus + self.vertical_minus + self.curve_minus


def _phi(u: np.ndarray, tau: float, sign: int) -> np.ndarray:
    """phi_+- (u) = u^2/4tau -+ (i/2) sinh u."""
    return u * u / (4.0 * tau) - sign * 0.5j * np.sinh(u)


def _contour_pieces(tau: float, sigma0: float, sign: int, quad: QuadSpec):
    """Vertical segment 0 -> i lambda and the curve from the saddle, mirrored into the lower half-plane for sign = -1."""
    lam = solve_lambda(tau)

    def vertical(v):
        u = sign * 1j * v * v
        small = v < 1e-8
        safe = np.where(small, 1.0, v)
        us = sign * 1j * safe * safe
        weight = np.where(small, SQRT2 / np.sqrt(sign * 1j), 2.0 * safe / np.sqrt(np.sinh(2.0 * us)))
        return np.exp(-sigma0 * _phi(u, tau, sign)) * weight * sign * 1j

    v_val, _ = adaptive_panels(vertical, np.linspace(0.0, math.sqrt(lam), 9), quad.abs_tol, quad.rel_tol, quad.max_subdiv)

    phi_s = 0.25 * (2.0 * math.sin(lam) - lam * math.cos(lam))
    x_max = math.sqrt(4.0 * tau * GAUSSIAN_CUTOFF_EXPONENT / sigma0)
    while True:
        y = float(_curve_height(tau, np.array([x_max]))[0])
        u_end = x_max + 1j * y
        if sigma0 * (u_end * u_end / (4.0 * tau) - 0.5j * np.sinh(u_end)).real - sigma0 * phi_s > GAUSSIAN_CUTOFF_EXPONENT:
            break
        x_max *= 1.5

    def curve(x):
        y = _curve_height(tau, x)
        u = x + sign * 1j * y
        du = 1.0 + sign * 1j * _curve_slope(tau, x, y)
        return np.exp(-sigma0 * _phi(u, tau, sign)) / np.sqrt(np.sinh(2.0 * u)) * du

    # integrand is O(e^{-sigma0 phi_s}) on the curve
    curve_tol = quad.abs_tol * math.exp(-sigma0 * phi_s)
    c_val, _ = adaptive_panels(curve, np.linspace(0.0, x_max, 17), curve_tol, quad.rel_tol, quad.max_subdiv)
    return v_val, c_val


def steepest_descent_integral(tau: float, sigma0: float, quad: Optional[QuadSpec] = None) -> SteepestDescentResult:
    """Delta V from the ansatz integral deformed onto the steepest-descent contour.

    The vertical pieces are purely imaginary after the sqrt(+-i) factors and the
    I_- contour is integrated independently, so the imaginary residual measures
    the cancellation numerically.
    """
    if tau <= 0 or sigma0 <= 0:
        raise DomainError(f"steepest_descent_integral needs tau > 0 and sigma0 > 0, got tau={tau}, sigma0={sigma0}")
    quad = _default_quad(quad)
    vp, cp = _contour_pieces(tau, sigma0, +1, quad)
    vm, cm = _contour_pieces(tau, sigma0, -1, quad)
    sqrt_minus_i = SQRT_I.conjugate()
    pieces = (SQRT_I * vp, SQRT_I * cp, sqrt_minus_i * vm, sqrt_minus_i * cm)
    total = sum(pieces)
    scale = 2.0 * math.sqrt(tau)
    return SteepestDescentResult(
        vertical_plus=pieces[0],
        curve_plus=pieces[1],
        vertical_minus=pieces[2],
        curve_minus=pieces[3],
        delta_v=total.real / scale,
        imaginary_residual=abs(total.imag) / scale,
    )


# ============ Covered-call exponent ============

def scaling_limit_check(
    tau: float,
    sigma0_list: Sequence[float],
    quad: Optional[QuadSpec] = None,
) -> List[ScalingCheckRow]:
    """-(1/sigma0) log(S0 - C) at T = 2 tau/sigma0 against tau Sigma_hat^2(tau) / 4.

    The corrected exponent first divides out the saddle prefactor
    (2 sqrt 2/pi) e^{-T/8} C / sqrt(tau sigma0).
    """
    if tau <= 0:
        raise DomainError(f"scaling_limit_check needs tau > 0, got {tau}")
    target = 0.25 * tau * sigma_hat_sq(tau)
    prefactor_c = saddle_prefactor(tau)
    rows = []
    for sigma0 in sigma0_list:
        T = 2.0 * tau / sigma0
        cc = covered_call(T, ModelParams(sigma0=sigma0), quad).value
        if cc <= 0:
            logger.warning(f"scaling_limit_check tau={tau} sigma0={sigma0}: covered call underflowed to {cc}")
            exponent = corrected = math.nan
        else:
            exponent = -math.log(cc) / sigma0
            prefactor = COVERED_CALL_FACTOR * math.exp(-T / 8.0) * prefactor_c / math.sqrt(tau * sigma0)
            corrected = -math.log(cc / prefactor) / sigma0
        rows.append(ScalingCheckRow(
            sigma0=sigma0,
            T=T,
            covered_call=cc,
            exponent=exponent,
            corrected_exponent=corrected,
            target=target,
            rel_err=abs(exponent - target) / target,
            rel_err_corrected=abs(corrected - target) / target,
        ))
        logger.info(f"scaling_limit_check tau={tau} sigma0={sigma0}: corrected exponent {corrected:.6g} vs {target:.6g}")
    return rows
