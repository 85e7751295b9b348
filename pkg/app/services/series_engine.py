"""
SABR Series Lab - Series Engine
Exact payoff, value and implied-variance series and the divergence diagnostics built on them.

Normalization: the continued payoff is G(u) = sigma0 * sum_k a_k u^(2k+1) with
a_k = pi/(2 sqrt 2) * q_k(sigma0^2), and the Gaussian-weighted value function

    Vhat(T) = integral_0^inf e^{-u^2/2T} g(u) du / sqrt(2 pi T)
            = sigma0 sqrt(T / 2pi) * sum_k b_k T^k,   b_k = a_k 2^k k!.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import get_settings
from app.models.schemas import ModelParams, QuadSpec, RootTestMode, TruncationReport
from app.services.errors import DomainError
from app.services.payoff_kernel import (
    eval_g,
    eval_g0,
    tail_bound,
    u_cutoff,
    weighted_payoff_integral,
)
from app.services.series_core import (
    PolyInW,
    PowerSeries,
    RationalScalar,
    erf_core_series,
    exp_series,
    ps_mul,
    ps_pow_neg_half,
    ps_reversion,
)

logger = logging.getLogger(__name__)

# pi / (2 sqrt 2) = sqrt(2) pi / 4
PAYOFF_PREFACTOR = RationalScalar(Fraction(1, 4), pi_power=1, sqrt2_power=1)
UNIT_H_AMPLITUDE = 2.0

Coefficient = Union[Fraction, float, RationalScalar, PolyInW]


def _check_order(N: Optional[int]) -> int:
    settings = get_settings()
    N = settings.series_order if N is None else N
    if N < 0 or N > settings.max_series_order:
        raise DomainError(f"series order must lie in [0, {settings.max_series_order}], got {N}")
    return N


# ============ Payoff series derivation ============

@lru_cache(maxsize=32)
def _payoff_polynomials(N: int, exact: bool) -> Tuple[PolyInW, ...]:
    """q_0..q_N as polynomials in sigma0^2.

    cosh u - cosh(wu) = (1 - w^2)(u^2/2)(1 + X(u^2)) with
    X_n = 2 (1 + w^2 + ... + w^(2n)) / (2n+2)!, so the w-integral of
    h(wu) (1 + X)^(-1/2) / sqrt(1 - w^2) reduces to Wallis sums.
    """
    num = Fraction if exact else float
    one_plus_x = [PolyInW([num(1)])]
    for n in range(1, N + 1):
        one_plus_x.append(PolyInW([num(Fraction(2, factorial(2 * n + 2)))] * (n + 1)))
    y = ps_pow_neg_half(PowerSeries(one_plus_x, N))

    # moments[p][j] = wallis sum of w^(2j) Y_p(w^2)
    moments = [[y[p].shifted(j).wallis_sum() for j in range(N + 1 - p)] for p in range(N + 1)]

    # sinh^2(z) = sum_{j>=1} 2^(2j-1) z^(2j) / (2j)!, as a series in z^2
    sinh_sq = PowerSeries([num(0)] + [num(Fraction(2 ** (2 * j - 1), factorial(2 * j))) for j in range(1, N + 1)], N)
    powers = [PowerSeries.constant(num(1), N)]
    for m in range(1, N + 1):
        powers.append(ps_mul(powers[-1], sinh_sq))

    big_r = []
    for n in range(N + 1):
        coeffs = []
        for m in range(n + 1):
            r_mn = sum((powers[m][j] * moments[n - j][j] for j in range(m, n + 1)), num(0))
            coeffs.append(num(Fraction((-1) ** m, 4 ** m * factorial(2 * m + 1))) * r_mn)
        big_r.append(PolyInW(coeffs))

    # times sinh(u)/u
    q = []
    for n in range(N + 1):
        total = PolyInW()
        for k in range(n + 1):
            total = total + big_r[k] * num(Fraction(1, factorial(2 * (n - k) + 1)))
        q.append(total)
    logger.debug(f"derived payoff polynomials to order {N} (exact={exact})")
    return tuple(q)


@dataclass(frozen=True)
class PayoffSeries:
    """Coefficients q_k of G(u) = amplitude * pi/(2 sqrt 2) * sum_k q_k u^(2k+1).

    ``q`` holds polynomials in sigma0^2 when ``sigma0`` is None, numbers otherwise.
    ``amplitude`` defaults to sigma0; the h = 1 payoff uses amplitude 2.
    """
    q: Tuple[Coefficient, ...]
    order: int
    sigma0: Optional[Union[float, Fraction]] = None
    amplitude: Optional[float] = None

    @property
    def symbolic(self) -> bool:
        return self.sigma0 is None

    @property
    def scale(self) -> float:
        if self.amplitude is not None:
            return self.amplitude
        if self.sigma0 is None:
            raise DomainError("a symbolic payoff series has no numeric amplitude")
        return float(self.sigma0)

    @property
    def a(self) -> List[Coefficient]:
        """a_k = pi/(2 sqrt 2) q_k, exact where q_k is exact."""
        out = []
        for qk in self.q:
            if isinstance(qk, PolyInW):
                out.append(PolyInW(_times_prefactor(c) for c in qk.coeffs))
            else:
                out.append(_times_prefactor(qk))
        return out

    def a_float(self) -> np.ndarray:
        if self.symbolic:
            raise DomainError("evaluate the series at a sigma0 first")
        return float(PAYOFF_PREFACTOR) * np.array([float(qk) for qk in self.q])

    def at(self, sigma0: Union[float, Fraction]) -> "PayoffSeries":
        """Numeric series at ``sigma0``; exact when sigma0 is a Fraction."""
        if not self.symbolic:
            raise DomainError("series is already numeric")
        return PayoffSeries(tuple(qk.evaluate(sigma0) for qk in self.q), self.order, sigma0, self.amplitude)

    def evaluate(self, u: float) -> float:
        """Truncated G(u)."""
        return self.scale * float(sum(c * u ** (2 * k + 1) for k, c in enumerate(self.a_float())))


def _times_prefactor(c):
    if isinstance(c, float):
        return float(PAYOFF_PREFACTOR) * c
    return PAYOFF_PREFACTOR * c


def derive_payoff_series(sigma0=None, N: Optional[int] = None, exact: bool = True) -> PayoffSeries:
    """Exact a_k(sigma0^2), or their values at a numeric sigma0."""
    N = _check_order(N)
    series = PayoffSeries(_payoff_polynomials(N, exact), N)
    return series if sigma0 is None else series.at(sigma0)


def v0_series(N: Optional[int] = None, exact: bool = False) -> PayoffSeries:
    """Series of the h = 1 payoff: g0(u) = 2 sum_k a_k(0) u^(2k+1)."""
    N = _check_order(N)
    symbolic = PayoffSeries(_payoff_polynomials(N, exact), N, amplitude=UNIT_H_AMPLITUDE)
    zero = Fraction(0) if exact else 0.0
    return symbolic.at(zero)


# ============ Value series ============

@dataclass(frozen=True)
class ValueSeries:
    """b_k = a_k 2^k k!; ``amplitude`` as in the payoff series it came from."""
    b: Tuple[Coefficient, ...]
    order: int
    sigma0: Optional[Union[float, Fraction]] = None
    amplitude: Optional[float] = None

    def terms(self, T: float) -> np.ndarray:
        """Terms of Vhat(T): amplitude sqrt(T/2pi) b_k T^k."""
        scale = self.amplitude if self.amplitude is not None else float(self.sigma0)
        b = np.array([float(bk) for bk in self.b])
        return scale * math.sqrt(T / (2.0 * math.pi)) * b * T ** np.arange(len(b))


def value_series_from_payoff(a: Sequence[Coefficient]) -> List[Coefficient]:
    """Termwise Gaussian moments of sum a_k u^(2k+1): b_k = a_k 2^k k!."""
    return [ak * (2 ** k * factorial(k)) for k, ak in enumerate(a)]


def value_series(ps: PayoffSeries) -> ValueSeries:
    return ValueSeries(tuple(value_series_from_payoff(ps.a)), ps.order, ps.sigma0, ps.amplitude)


# ============ Implied variance ============

def implied_variance_series(ps: PayoffSeries, N: Optional[int] = None) -> PowerSeries:
    """Sigma^2_BS(T)/sigma0^2 = sum c_k T^k at the money.

    With eps^2 = sigma0^2 T/8 and F(T) = e^{-T/8} sum_k q_k 2^k k! T^k, the
    ATM relation C/S0 = Erf(y) reads E(y) = eps F where E = (sqrt pi/2) Erf,
    so sigma_BS/sigma0 = sum_j e_j eps^(2j) F^(2j+1) with e = E^{-1}.
    """
    N = ps.order if N is None else min(_check_order(N), ps.order)
    q = ps.q[: N + 1]
    F = ps_mul(exp_series(N, Fraction(-1, 8)), PowerSeries([qk * (2 ** k * factorial(k)) for k, qk in enumerate(q)], N))
    inverse = ps_reversion(erf_core_series(2 * N + 1))
    eps_sq = PolyInW([Fraction(0), Fraction(1, 8)]) if ps.symbolic else ps.sigma0 * ps.sigma0 / 8
    f_sq = ps_mul(F, F)
    power = F
    ratio = F
    for j in range(1, N + 1):
        power = ps_mul(power, f_sq).shift(1) * eps_sq
        ratio = ratio + inverse[2 * j + 1] * power
    return ps_mul(ratio, ratio)


# ============ Coefficient asymptotics and radius tests ============

def coeff_asymptotics(k: int) -> float:
    """Large-k form (-1)^(k+1) sqrt 2 / (pi^(2k) (2k)(2k+1)) of a_k, from the log singularities at u = +-i pi."""
    if k < 1:
        raise DomainError(f"coeff_asymptotics needs k >= 1, got {k}")
    return (-1) ** (k + 1) * math.sqrt(2.0) / (math.pi ** (2 * k) * (2 * k) * (2 * k + 1))


def _log_abs(c) -> float:
    if isinstance(c, RationalScalar):
        return _log_abs(c.value) + float(c.pi_power) * math.log(math.pi) + 0.5 * c.sqrt2_power * math.log(2.0)
    if isinstance(c, Fraction):
        return math.log(abs(c.numerator)) - math.log(c.denominator)
    return math.log(abs(float(c)))


def _payoff_prefactor_log(n: int) -> float:
    # log of sqrt 2 / ((2n)(2n+1)), the algebraic factor of coeff_asymptotics
    return 0.5 * math.log(2.0) - math.log(2 * n * (2 * n + 1))


def root_test(
    coeffs: Sequence, mode: RootTestMode = RootTestMode.PAYOFF, strip_prefactor: bool = False
) -> List[Tuple[float, float]]:
    """(1/n, reduced coefficient) pairs.

    payoff: |a_n|^(-1/(2n)) estimates the radius in u of sum a_n u^(2n+1);
    value:  |b_n|^(-1/n) estimates the radius in T. Zero coefficients are skipped.
    With ``strip_prefactor`` the payoff coefficients are first divided by
    sqrt 2/((2n)(2n+1)), which removes the ln(n)/n drift of the raw sequence.
    """
    mode = RootTestMode(mode)
    if strip_prefactor and mode is not RootTestMode.PAYOFF:
        raise DomainError("strip_prefactor applies to payoff coefficients only")
    power = 2 if mode is RootTestMode.PAYOFF else 1
    out = []
    for n, c in enumerate(coeffs):
        if n == 0 or c == 0:
            continue
        log_c = _log_abs(c) - (_payoff_prefactor_log(n) if strip_prefactor else 0.0)
        out.append((1.0 / n, math.exp(-log_c / (power * n))))
    return out


def ratio_test(coeffs: Sequence, stride: int = 1, strip_prefactor: bool = False) -> List[Tuple[float, float]]:
    """Domb-Sykes estimates (1/n, |c_(n-stride)/c_n|^(1/stride)).

    ``strip_prefactor`` divides payoff coefficients by sqrt 2/((2n)(2n+1)) first.
    """
    out = []
    for n in range(stride, len(coeffs)):
        prev, cur = coeffs[n - stride], coeffs[n]
        if prev == 0 or cur == 0 or (strip_prefactor and n == stride):
            continue
        log_ratio = _log_abs(prev) - _log_abs(cur)
        if strip_prefactor:
            log_ratio += _payoff_prefactor_log(n) - _payoff_prefactor_log(n - stride)
        out.append((1.0 / n, math.exp(log_ratio / stride)))
    return out


def extrapolate_radius(
    points: Sequence[Tuple[float, float]], method: str = "log", last: int = 8, window: int = 4
) -> float:
    """Extrapolation of (1/n, r_n) to 1/n -> 0.

    linear:    r = R + b/n
    quadratic: r = R + b/n + c/n^2
    log:       ln r = ln R + alpha ln(n)/n + beta/n
    tail:      geometric mean of the last ``window`` r_n, for sequences whose
               remaining correction decays faster than 1/n
    """
    pts = np.asarray(points[-last:], dtype=float)
    if len(pts) < 3:
        raise DomainError("need at least three points to extrapolate")
    inv_n, r = pts[:, 0], pts[:, 1]
    if method == "tail":
        return float(np.exp(np.mean(np.log(r[-window:]))))
    if method == "linear":
        design, target = np.column_stack([np.ones_like(inv_n), inv_n]), r
    elif method == "quadratic":
        design, target = np.column_stack([np.ones_like(inv_n), inv_n, inv_n ** 2]), r
    elif method == "log":
        n = 1.0 / inv_n
        design, target = np.column_stack([np.ones_like(inv_n), np.log(n) / n, inv_n]), np.log(r)
    else:
        raise DomainError(f"unknown extrapolation method {method!r}")
    solution, *_ = np.linalg.lstsq(design, target, rcond=None)
    return float(math.exp(solution[0]) if method == "log" else solution[0])


# ============ Truncation and error bounds ============

def error_bound(T: float, sigma0: float) -> float:
    """Bound on the optimally truncated value-series error (the u > pi tail of the Gaussian integral)."""
    if T <= 0 or sigma0 <= 0:
        raise DomainError(f"error_bound needs T > 0 and sigma0 > 0, got T={T}, sigma0={sigma0}")
    return tail_bound(T, sigma0, math.pi)


def optimal_truncation(T: float, ps: PayoffSeries, reference: Optional[float] = None) -> TruncationReport:
    """Partial sums of Vhat(T) and the order whose first neglected term is smallest."""
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")
    terms = value_series(ps).terms(T)
    partial = np.cumsum(terms)
    neglected = np.abs(terms[1:])
    n_star = int(np.argmin(neglected))
    report = TruncationReport(
        T=T,
        N_star=n_star,
        eps_star=float(neglected[n_star]),
        bound=error_bound(T, ps.scale),
        N_star_estimate=math.e * math.pi ** 2 / (2.0 * T),
        N_star_turning=math.pi ** 2 / (2.0 * T),
        terms=[float(t) for t in terms],
        partial_sums=[float(s) for s in partial],
        reference=reference,
    )
    logger.info(f"optimal_truncation T={T:.6g}: N*={n_star}, eps*={report.eps_star:.3e}, bound={report.bound:.3e}")
    return report


def payoff_partial_sums(ps: PayoffSeries, u: float) -> List[float]:
    """Partial sums of the truncated G(u) series, one per order."""
    a = ps.a_float()
    terms = ps.scale * a * u ** (2 * np.arange(len(a)) + 1)
    return [float(s) for s in np.cumsum(terms)]


def _payoff_function(sigma0: Optional[float], quad: Optional[QuadSpec]):
    if sigma0 is None:
        return eval_g0
    params = ModelParams(sigma0=sigma0)
    return lambda u: eval_g(u, params, quad)


def v0_quadrature(T: float, quad: Optional[QuadSpec] = None) -> float:
    """Vhat for the h = 1 payoff g0, by quadrature."""
    u_cut, tail = u_cutoff(T, UNIT_H_AMPLITUDE, quad)
    value, _ = weighted_payoff_integral(T, eval_g0, 0.0, u_cut, quad)
    logger.debug(f"v0_quadrature T={T:.6g}: cutoff {u_cut:.4g}, tail bound {tail:.2e}")
    return value


def tail_contribution(T: float, sigma0: Optional[float] = None, quad: Optional[QuadSpec] = None) -> float:
    """Measured u > pi part of Vhat (the h = 1 payoff when sigma0 is None)."""
    amplitude = UNIT_H_AMPLITUDE if sigma0 is None else sigma0
    u_cut, _ = u_cutoff(T, amplitude, quad)
    if u_cut <= math.pi:
        return 0.0
    value, _ = weighted_payoff_integral(T, _payoff_function(sigma0, quad), math.pi, u_cut, quad)
    return value


def relative_tail_error(T: float, sigma0: Optional[float] = None, quad: Optional[QuadSpec] = None) -> float:
    """tail_contribution / Vhat."""
    amplitude = UNIT_H_AMPLITUDE if sigma0 is None else sigma0
    u_cut, _ = u_cutoff(T, amplitude, quad)
    total, _ = weighted_payoff_integral(T, _payoff_function(sigma0, quad), 0.0, u_cut, quad)
    return tail_contribution(T, sigma0, quad) / total


# ============ Control payoffs ============

def black_scholes_payoff_coeffs(N: int) -> List[Fraction]:
    """sinh(u/2) = sum (1/2)^(2k+1) u^(2k+1) / (2k+1)!."""
    return [Fraction(1, 2 ** (2 * k + 1) * factorial(2 * k + 1)) for k in range(N + 1)]


def erf_value_series(N: int) -> PowerSeries:
    """Vhat/sqrt(T/2pi) for the sinh(u/2) payoff: (1/2) e^{T/8} sum (-1)^n (T/8)^n / (n! (2n+1))."""
    odd_part = PowerSeries([Fraction((-1) ** n, 8 ** n * factorial(n) * (2 * n + 1)) for n in range(N + 1)], N)
    return ps_mul(exp_series(N, Fraction(1, 8)), odd_part) * Fraction(1, 2)


def gaussian_payoff_coeffs(k: Union[float, Fraction], N: int) -> List:
    """u e^{-k u^2} = sum (-k)^n u^(2n+1) / n!; its value series has radius 1/(2k) in T."""
    if k <= 0:
        raise DomainError(f"k must be positive, got {k}")
    k = k if isinstance(k, float) else Fraction(k)
    return [(-k) ** n / factorial(n) for n in range(N + 1)]
