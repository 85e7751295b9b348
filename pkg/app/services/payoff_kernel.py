"""
SABR Series Lab - Payoff Kernel
Payoff integrand family h, g, g0, g_inf, the McKean tail and the complex continuation G(u).

All functions work in omega = 1 units: callers holding a general omega go
through ``ModelParams.rescaled`` first. With a = sigma0/2,

    h(s)  = sin(a sinh s) / sinh s
    g(u)  = sinh u * integral_0^u h(s) / sqrt(cosh u - cosh s) ds

and for a strike away from the money (sinh s_- = |log K/S0| / sigma0)

    h(s, s_-) = sin(a sqrt(sinh^2 s - sinh^2 s_-)) / sinh s,   s >= s_-.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special
from scipy.stats import norm

from app.models.schemas import ModelParams, Quadrant, QuadSpec
from app.services.errors import BranchCutError, ConvergenceError, DomainError
from app.services.quadrature import adaptive_panels, quad_checked, quad_panels

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
H_SERIES_CUTOFF = 1e-4
G0_SERIES_CUTOFF = 1e-6
STRIP_HALF_WIDTH = math.pi
BRANCH_CHECK_IMAG = 1e-8

ArrayLike = Union[float, np.ndarray]


def _default_quad(quad: Optional[QuadSpec]) -> QuadSpec:
    return quad if quad is not None else QuadSpec.from_settings()


def _half_amplitude(params: ModelParams) -> float:
    return 0.5 * params.unit_sigma0


def _cosh_gap(u, s):
    """cosh u - cosh s without cancellation."""
    return 2.0 * np.sinh(0.5 * (u + s)) * np.sinh(0.5 * (u - s))


# ============ h(s) ============

def _sinc_sinh(x, a):
    """sin(a*x)/x with the series branch a(1 - (ax)^2/6 + (ax)^4/120) near x = 0."""
    ax = a * x
    series = a * (1.0 - ax * ax / 6.0 + ax ** 4 / 120.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.sin(ax) / x
    return series, direct


def eval_h(s: ArrayLike, params: ModelParams, s_minus: float = 0.0) -> ArrayLike:
    """sin(sigma0/2 * sinh s)/sinh s, or its strike-shifted form when ``s_minus > 0``.

    Vectorized over ``s``; returns a float for scalar input.
    """
    a = _half_amplitude(params)
    s_arr = np.asarray(s, dtype=float)
    x = np.sinh(s_arr)
    if s_minus == 0.0:
        series, direct = _sinc_sinh(x, a)
        out = np.where(np.abs(s_arr) < H_SERIES_CUTOFF, series, direct)
    else:
        xm = math.sinh(s_minus)
        radius = np.sqrt(np.maximum(x * x - xm * xm, 0.0))
        out = np.sin(a * radius) / x
    return float(out) if out.ndim == 0 else out


def _sine_zero_abscissae(a: float, x_minus: float, x_max: float) -> np.ndarray:
    """sinh-values where a*sqrt(x^2 - x_minus^2) is a positive multiple of pi, below x_max."""
    if x_max <= x_minus:
        return np.empty(0)
    k_max = int(math.floor(a * math.sqrt(x_max * x_max - x_minus * x_minus) / math.pi))
    k = np.arange(1, k_max + 1, dtype=float)
    x_k = np.sqrt(x_minus * x_minus + (k * math.pi / a) ** 2)
    return x_k[x_k < x_max]


def _breaks(lo: float, hi: float, interior: Sequence[float]) -> np.ndarray:
    inner = np.asarray(interior, dtype=float)
    inner = inner[(inner > lo) & (inner < hi)]
    return np.concatenate([[lo], np.sort(inner), [hi]])


# ============ g(u) ============

def eval_g_with_error(
    u: float,
    params: ModelParams,
    quad: Optional[QuadSpec] = None,
    s_minus: float = 0.0,
    unit_h: bool = False,
) -> Tuple[float, float]:
    """g(u) and its quadrature error estimate.

    The s-range [s_-, u] is split at m = (s_- + u)/2. Below m the integrand is
    taken in s (ATM) or in rho with sinh s = sinh s_- + rho^2 (strike case);
    above m the substitution cosh u - cosh s = t^2 removes the endpoint
    singularity. With ``unit_h`` the factor h is replaced by 1 (the g0 integrand).
    """
    quad = _default_quad(quad)
    if u <= 0:
        raise DomainError(f"eval_g needs u > 0, got {u}")
    if unit_h and s_minus > 0:
        raise DomainError("unit_h is only defined at the money")
    if u <= s_minus:
        return 0.0, 0.0
    a = _half_amplitude(params)
    sinh_u = math.sinh(u)
    x_minus = math.sinh(s_minus)
    mid = 0.5 * (s_minus + u)

    def h_of(s):
        if unit_h:
            return np.ones_like(s)
        if s_minus == 0.0:
            series, direct = _sinc_sinh(np.sinh(s), a)
            return np.where(np.abs(s) < H_SERIES_CUTOFF, series, direct)
        x = np.sinh(s)
        return np.sin(a * np.sqrt(np.maximum(x * x - x_minus * x_minus, 0.0))) / x

    def lower_direct(s):
        return h_of(s) / np.sqrt(_cosh_gap(u, s))

    def lower_rho(rho):
        x = x_minus + rho * rho
        s = np.arcsinh(x)
        num = np.sin(a * rho * np.sqrt(2.0 * x_minus + rho * rho))
        return num / x * 2.0 * rho / (np.cosh(s) * np.sqrt(_cosh_gap(u, s)))

    c_minus_1 = 2.0 * math.sinh(0.5 * u) ** 2

    def upper(t):
        s = 2.0 * np.arcsinh(np.sqrt(np.maximum(c_minus_1 - t * t, 0.0) / 2.0))
        return 2.0 * h_of(s) / np.sinh(s)

    zeros_s = np.empty(0)
    if not unit_h and quad.osc_split and params.unit_sigma0 * sinh_u > quad.osc_threshold:
        zeros_s = np.arcsinh(_sine_zero_abscissae(a, x_minus, sinh_u))

    low_zeros = zeros_s[zeros_s < mid]
    high_zeros = zeros_s[zeros_s >= mid]
    t_mid = math.sqrt(_cosh_gap(u, mid))
    high_t = np.sqrt(_cosh_gap(u, high_zeros))

    tol = quad.abs_tol / (2.0 * sinh_u)
    if s_minus == 0.0:
        low_val, low_err = adaptive_panels(
            lower_direct, _breaks(0.0, mid, low_zeros), tol, quad.rel_tol, quad.max_subdiv
        )
    else:
        rho_mid = math.sqrt(math.sinh(mid) - x_minus)
        rho_zeros = np.sqrt(np.sinh(low_zeros) - x_minus)
        low_val, low_err = adaptive_panels(
            lower_rho, _breaks(0.0, rho_mid, rho_zeros), tol, quad.rel_tol, quad.max_subdiv
        )
    up_val, up_err = adaptive_panels(upper, _breaks(0.0, t_mid, high_t), tol, quad.rel_tol, quad.max_subdiv)
    logger.debug(f"eval_g u={u:.6g}: {len(zeros_s)} sine zeros, split at s={mid:.6g}")
    return sinh_u * (low_val + up_val), sinh_u * (low_err + up_err)


def eval_g(
    u: float,
    params: ModelParams,
    quad: Optional[QuadSpec] = None,
    s_minus: float = 0.0,
    unit_h: bool = False,
    method: str = "substitution",
) -> float:
    """Payoff g(u) (or g(u, s_-)).

    ``method="algebraic"`` evaluates the same integral with QUADPACK's
    algebraic endpoint weight instead of the t-substitution; it is slower and
    serves as an independent cross-check.
    """
    if method == "substitution":
        return eval_g_with_error(u, params, quad, s_minus=s_minus, unit_h=unit_h)[0]
    if method != "algebraic":
        raise DomainError(f"unknown eval_g method {method!r}")
    quad = _default_quad(quad)
    if u <= s_minus:
        return 0.0
    sinh_u = math.sinh(u)

    def integrand(s):
        d = 0.5 * (u - s)
        dsinh = 1.0 if d == 0.0 else d / math.sinh(d)
        h = 1.0 if unit_h else eval_h(s, params, s_minus)
        return h * math.sqrt(dsinh / math.sinh(0.5 * (u + s)))

    value, _ = quad_checked(integrand, s_minus, u, quad, epsabs=quad.abs_tol / sinh_u, weight="alg", wvar=(0.0, -0.5))
    return sinh_u * value


def eval_g_inf(u: ArrayLike) -> ArrayLike:
    """Large-sigma0 limit (pi/sqrt 2) cosh(u/2)."""
    if np.ndim(u):
        return math.pi / SQRT2 * np.cosh(0.5 * np.asarray(u, dtype=float))
    return math.pi / SQRT2 * math.cosh(0.5 * u)


def eval_g_deficit_with_error(u: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> Tuple[float, float]:
    """g_inf(u) - g(u) at the money, without subtracting two O(1) numbers.

    With x = sinh s, X = sinh u and phi(x) = 1/(sqrt(1+x^2) sqrt(cosh u - sqrt(1+x^2))),

        g_inf - g = X [phi(0) (pi/2 - Si(aX)) - R],
        R = integral_0^X sin(ax) (phi(x) - phi(0)) / x dx.

    R is split at X/2; the upper half uses t^2 = cosh u - sqrt(1+x^2).
    """
    quad = _default_quad(quad)
    if u <= 0:
        raise DomainError(f"eval_g_deficit needs u > 0, got {u}")
    if not params.is_atm:
        raise DomainError("eval_g_deficit is only defined at the money")
    a = _half_amplitude(params)
    big_x = math.sinh(u)
    c = math.cosh(u)
    phi0 = 1.0 / (SQRT2 * math.sinh(0.5 * u))
    si, _ = special.sici(a * big_x)
    head = phi0 * (0.5 * math.pi - si)

    def direct(x):
        r = np.sqrt(1.0 + x * x)
        gap = (big_x - x) * (big_x + x) / (c + r)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sin(a * x) * (1.0 / (r * np.sqrt(gap)) - phi0) / x
        return np.where(x > 0, out, 0.0)

    c_minus_1 = 2.0 * math.sinh(0.5 * u) ** 2
    c_plus_1 = 2.0 * math.cosh(0.5 * u) ** 2

    def upper(t):
        t2 = t * t
        x2 = (c_minus_1 - t2) * (c_plus_1 - t2)
        x = np.sqrt(x2)
        return 2.0 * np.sin(a * x) * (1.0 - phi0 * t * (c - t2)) / x2

    half_x = 0.5 * big_x

    def t_of(x):
        return np.sqrt((big_x - x) * (big_x + x) / (c + np.sqrt(1.0 + x * x)))

    zeros = np.arange(1, int(a * big_x / math.pi) + 1) * math.pi / a if quad.osc_split else np.empty(0)
    tol = quad.abs_tol / (2.0 * big_x)
    low_val, low_err = adaptive_panels(direct, _breaks(0.0, half_x, zeros[zeros < half_x]), tol, quad.rel_tol, quad.max_subdiv)
    up_zeros = t_of(zeros[(zeros >= half_x) & (zeros < big_x)])
    up_val, up_err = adaptive_panels(upper, _breaks(0.0, float(t_of(half_x)), up_zeros), tol, quad.rel_tol, quad.max_subdiv)
    return big_x * (head - low_val - up_val), big_x * (low_err + up_err)


def eval_g_deficit(u: float, params: ModelParams, quad: Optional[QuadSpec] = None) -> float:
    return eval_g_deficit_with_error(u, params, quad)[0]


# ============ g0(u) and elliptic integrals ============

def incomplete_ellipf(phi: float, m: float) -> float:
    """F(phi|m) through Carlson's R_F, with quasi-periodicity outside |phi| <= pi/2."""
    k = round(phi / math.pi)
    reduced = phi - k * math.pi
    sin_p = math.sin(reduced)
    y = 1.0 - m * sin_p * sin_p
    if y < 0:
        raise DomainError(f"F(phi|m) is complex for phi={phi}, m={m}")
    value = sin_p * float(special.elliprf(math.cos(reduced) ** 2, y, 1.0))
    if k:
        if m >= 1:
            raise DomainError(f"complete integral diverges for m={m}")
        value += 2 * k * float(special.elliprf(0.0, 1.0 - m, 1.0))
    return value


def ellipf_imaginary(phi: float, m: float) -> float:
    """F(i*phi|m)/i = F(gd(phi) | 1-m), written as a real Carlson evaluation."""
    sin_p = math.tanh(phi)
    cos_sq = 1.0 / math.cosh(phi) ** 2
    y = cos_sq + m * sin_p * sin_p
    # arguments at rounding level of zero are the exact complete-integral limit
    if abs(y) <= 8 * np.finfo(float).eps * (cos_sq + abs(m) * sin_p * sin_p):
        y = 0.0
    if y < 0:
        raise DomainError(f"F(i phi|m) is complex for phi={phi}, m={m}")
    return sin_p * float(special.elliprf(cos_sq, y, 1.0))


def eval_g0(u: float) -> float:
    """Payoff with h = 1: -2i sinh u F(iu/2 | -cosech^2(u/2)) / sqrt(cosh u - 1)."""
    if u <= 0:
        raise DomainError(f"eval_g0 needs u > 0, got {u}")
    if u < G0_SERIES_CUTOFF:
        return math.pi * u / SQRT2
    half = 0.5 * u
    modulus = -1.0 / math.sinh(half) ** 2
    return 2.0 * math.sinh(u) * ellipf_imaginary(half, modulus) / (SQRT2 * math.sinh(half))


# ============ Complex continuation G(u) ============

def quadrant_of(u: complex) -> Quadrant:
    if u.imag >= 0:
        return Quadrant.Q1 if u.real >= 0 else Quadrant.Q2
    return Quadrant.Q3 if u.real < 0 else Quadrant.Q4


def _complex_h(zeta: np.ndarray, a: float) -> np.ndarray:
    x = np.sinh(zeta)
    series, direct = _sinc_sinh(x, a)
    return np.where(np.abs(zeta) < H_SERIES_CUTOFF, series, direct)


def _positive_cut_sqrt(z: np.ndarray) -> np.ndarray:
    """(sqrt z)_+: branch cut on the positive real axis, values in the upper half plane."""
    root = np.sqrt(z)
    return np.where(root.imag >= 0, root, -root)


def _G_first_quadrant(u: complex, params: ModelParams, quad: QuadSpec) -> complex:
    if u.imag == 0.0:
        return 0j if u.real == 0.0 else complex(eval_g(u.real, params, quad))
    a = _half_amplitude(params)
    sinh_u = np.sinh(u)
    check_branch = u.imag > BRANCH_CHECK_IMAG

    def integrand(v):
        w = 1.0 - v * v
        zeta = w * u
        z = 2.0 * np.sinh(0.5 * (u + zeta)) * np.sinh(0.5 * (u - zeta))
        if check_branch:
            on_cut = (z.real > 0) & (np.abs(z.imag) <= 1e-14 * np.abs(z))
            if on_cut.any():
                raise BranchCutError(f"(sqrt z)_+ argument on the positive real axis for u={u}")
        return _complex_h(zeta, a) * 2.0 * v / _positive_cut_sqrt(z)

    panels = int(min(max(4, math.ceil(abs(a * sinh_u) / math.pi)), 4000))
    value, _ = adaptive_panels(
        integrand, np.linspace(0.0, 1.0, panels + 1), quad.abs_tol, quad.rel_tol, quad.max_subdiv
    )
    return complex(u * sinh_u * value)


def eval_G_complex(u: complex, params: ModelParams, quad: Optional[QuadSpec] = None) -> complex:
    """Continuation of g into the strip |Im u| < pi.

    Only the first quadrant is integrated; the others follow from oddness and
    Schwarz reflection.
    """
    quad = _default_quad(quad)
    u = complex(u)
    if abs(u.imag) >= STRIP_HALF_WIDTH:
        raise DomainError(f"|Im u| must be < pi, got u={u}")
    quadrant = quadrant_of(u)
    if quadrant is Quadrant.Q1:
        return _G_first_quadrant(u, params, quad)
    if quadrant is Quadrant.Q2:
        return complex(-np.conj(_G_first_quadrant(-np.conj(u), params, quad)))
    if quadrant is Quadrant.Q3:
        return -_G_first_quadrant(-u, params, quad)
    return complex(np.conj(_G_first_quadrant(np.conj(u), params, quad)))


@dataclass(frozen=True)
class ComplexEval:
    """A strip point, its quadrant and G there."""
    u: complex
    quadrant: Quadrant
    value: complex

    @classmethod
    def at(cls, u: complex, params: ModelParams, quad: Optional[QuadSpec] = None) -> "ComplexEval":
        u = complex(u)
        return cls(u=u, quadrant=quadrant_of(u), value=eval_G_complex(u, params, quad))


def eval_G_imaginary_singularity(y: ArrayLike, params: ModelParams) -> ArrayLike:
    """Singular model Im G(iy) ~ sqrt(2) (sigma0/2) sin y log(8/(pi - y)) as y -> pi."""
    y_arr = np.asarray(y, dtype=float)
    if np.any((y_arr <= 0) | (y_arr >= math.pi)):
        raise DomainError("the imaginary-axis model needs 0 < y < pi")
    out = SQRT2 * _half_amplitude(params) * np.sin(y_arr) * np.log(8.0 / (math.pi - y_arr))
    return float(out) if out.ndim == 0 else out


def check_lemma1(w: float, U: float = 5.0, nx: int = 200, ny: int = 200, tol: float = 1e-10) -> bool:
    """True when cosh u - cosh(wu) avoids the positive real axis on a half-strip grid."""
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"w must lie in [0, 1], got {w}")
    x = np.linspace(0.0, U, nx)
    y = np.linspace(0.0, math.pi, ny + 2)[1:-1]
    u = x[:, None] + 1j * y[None, :]
    z = np.cosh(u) - np.cosh(w * u)
    hits = (z.real > 0) & (np.abs(z.imag) <= tol * np.abs(z))
    if hits.any():
        logger.warning(f"check_lemma1: {int(hits.sum())} grid points on the positive real axis for w={w}")
    return not bool(hits.any())


# ============ McKean kernel tail ============

def mckean_tail(t: float, s: float, quad: Optional[QuadSpec] = None, panels: int = 16) -> float:
    """G(t, s) = e^{-t/8}/sqrt(pi t) * integral_s^inf e^{-u^2/2t} sinh u / sqrt(cosh u - cosh s) du.

    Uses r^2 = cosh u - cosh s, truncated where u^2 = s^2 + 80 t.
    """
    quad = _default_quad(quad)
    if t <= 0 or s < 0:
        raise DomainError(f"mckean_tail needs t > 0 and s >= 0, got t={t}, s={s}")
    base = 2.0 * math.sinh(0.5 * s) ** 2
    u_cut = math.sqrt(s * s + 80.0 * t)

    def integrand(r):
        u = 2.0 * np.arcsinh(np.sqrt((base + r * r) / 2.0))
        return 2.0 * np.exp(-u * u / (2.0 * t))

    u_grid = np.linspace(s, u_cut, panels + 1)
    r_grid = np.sqrt(_cosh_gap(u_grid, s))
    value, _ = adaptive_panels(integrand, r_grid, quad.abs_tol, quad.rel_tol, quad.max_subdiv)
    return math.exp(-t / 8.0) / math.sqrt(math.pi * t) * value


# ============ Gaussian-weighted u-integrals ============

def tail_bound(T: float, sigma0: float, U: float) -> float:
    """Bound on integral_U^inf e^{-u^2/2T} g(u) du / sqrt(2 pi T) from g <= sigma0 sqrt2 u cosh(u/2)."""
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")
    shifted = U - 0.5 * T
    log_gauss = 0.5 * math.log(T / (2.0 * math.pi)) - shifted * shifted / (2.0 * T)
    log_mills = math.log(0.5 * T) + float(norm.logcdf(-shifted / math.sqrt(T)))
    return SQRT2 * sigma0 * math.exp(T / 8.0 + np.logaddexp(log_gauss, log_mills))


def u_cutoff(T: float, sigma0: float, quad: Optional[QuadSpec] = None) -> Tuple[float, float]:
    """Upper limit for the u-integral and the bound on what it discards.

    An explicit ``quad.u_max`` is used as given; otherwise max(8 sqrt T, pi) + margin,
    pulled in to where the tail bound falls below 1% of the absolute tolerance.
    """
    quad = _default_quad(quad)
    if quad.u_max is not None:
        return quad.u_max, tail_bound(T, sigma0, quad.u_max)
    u_max = max(8.0 * math.sqrt(T), math.pi) + quad.u_margin
    target = 1e-2 * quad.abs_tol

    def excess(U):
        return math.log(max(tail_bound(T, sigma0, U), 1e-300)) - math.log(target)

    if excess(u_max) > 0 or excess(1e-8) <= 0:
        return u_max, tail_bound(T, sigma0, u_max)
    u_cut = optimize.brentq(excess, 1e-8, u_max, xtol=1e-6)
    logger.debug(f"u_cutoff T={T:.6g}: {u_cut:.6g} (nominal {u_max:.6g})")
    return u_cut, tail_bound(T, sigma0, u_cut)


def weighted_payoff_integral(
    T: float,
    g: Callable[[float], float],
    lower: float,
    upper: float,
    quad: Optional[QuadSpec] = None,
    points: Optional[Sequence[float]] = None,
) -> Tuple[float, float]:
    """integral_lower^upper e^{-u^2/2T} g(u) du / sqrt(2 pi T), split at ``points`` and every sqrt(T)."""
    quad = _default_quad(quad)
    norm_const = 1.0 / math.sqrt(2.0 * math.pi * T)

    def integrand(u):
        return math.exp(-u * u / (2.0 * T)) * g(u) * norm_const

    step = math.sqrt(T)
    grid = list(np.arange(lower, upper, step)[1:])
    if points is not None:
        grid += [float(p) for p in points]
    breaks = _breaks(lower, upper, grid)
    try:
        return quad_panels(integrand, list(breaks), quad)
    except ConvergenceError as exc:
        logger.error(f"weighted_payoff_integral T={T:.6g} on [{lower}, {upper}]: {exc}")
        raise
