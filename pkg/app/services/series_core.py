"""
SABR Series Lab - Series Core
Truncated one-variable power series over exact or floating coefficient rings.

A :class:`PowerSeries` holds the coefficients ``c_0..c_N`` of

    f(x) = c_0 + c_1*x + ... + c_N*x**N + O(x**(N+1))

Coefficients may be ``fractions.Fraction`` (exact), ``float`` (fast mirror),
:class:`RationalScalar` (rationals times powers of pi and sqrt 2) or
:class:`PolyInW` (polynomials in the square of an auxiliary variable). The
only requirements are ``+``, ``-``, ``*`` and comparison with ``0``.
Arithmetic between two series keeps the lower of their two orders.
"""
import logging
import math
from fractions import Fraction
from math import factorial
from typing import Callable, Iterable, Optional, Sequence, Union

from app.services.errors import DomainError

logger = logging.getLogger(__name__)

Number = Union[int, float, Fraction]

EVEN = "even"
ODD = "odd"


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raise TypeError(f"exact arithmetic needs int or Fraction, got {type(value).__name__}")


def _zero_like(value):
    return value * 0


# ============ Coefficient fields ============

class RationalScalar:
    """Exact number ``value * pi**pi_power * sqrt(2)**sqrt2_power``.

    The sqrt 2 exponent is kept in {0, 1} by folding even powers into
    ``value``, so equal numbers have equal representations. Zero carries no
    exponents and is compatible with every other scalar under addition.
    """

    __slots__ = ("value", "pi_power", "sqrt2_power")

    def __init__(self, value: Number = 0, pi_power: Number = 0, sqrt2_power: int = 0):
        value = _as_fraction(value)
        pi_power = _as_fraction(pi_power)
        sqrt2_power = int(sqrt2_power)
        if value == 0:
            pi_power, sqrt2_power = Fraction(0), 0
        else:
            folded = sqrt2_power - (sqrt2_power % 2)
            value *= Fraction(2) ** (folded // 2)
            sqrt2_power -= folded
        self.value = value
        self.pi_power = pi_power
        self.sqrt2_power = sqrt2_power

    @classmethod
    def coerce(cls, other) -> "RationalScalar":
        if isinstance(other, RationalScalar):
            return other
        return cls(other)

    def is_zero(self) -> bool:
        return self.value == 0

    def _same_field(self, other: "RationalScalar") -> bool:
        return (self.pi_power, self.sqrt2_power) == (other.pi_power, other.sqrt2_power)

    def __add__(self, other):
        if isinstance(other, float):
            return float(self) + other
        other = RationalScalar.coerce(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if not self._same_field(other):
            raise DomainError(f"cannot add {self!r} and {other!r}: different pi/sqrt2 powers")
        return RationalScalar(self.value + other.value, self.pi_power, self.sqrt2_power)

    __radd__ = __add__

    def __neg__(self):
        return RationalScalar(-self.value, self.pi_power, self.sqrt2_power)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, float):
            return float(self) * other
        if isinstance(other, PolyInW):
            return NotImplemented
        other = RationalScalar.coerce(other)
        return RationalScalar(
            self.value * other.value,
            self.pi_power + other.pi_power,
            self.sqrt2_power + other.sqrt2_power,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "RationalScalar":
        if self.is_zero():
            raise ZeroDivisionError("RationalScalar division by zero")
        # 1/sqrt(2) = sqrt(2)/2
        value = 1 / self.value
        if self.sqrt2_power:
            value /= 2
        return RationalScalar(value, -self.pi_power, self.sqrt2_power)

    def __truediv__(self, other):
        if isinstance(other, float):
            return float(self) / other
        return self * RationalScalar.coerce(other).reciprocal()

    def __rtruediv__(self, other):
        if isinstance(other, float):
            return other / float(self)
        return RationalScalar.coerce(other) * self.reciprocal()

    def __pow__(self, n: int):
        result = RationalScalar(1)
        base = self if n >= 0 else self.reciprocal()
        for _ in range(abs(n)):
            result = result * base
        return result

    def __float__(self) -> float:
        return float(self.value) * math.pi ** float(self.pi_power) * math.sqrt(2.0) ** self.sqrt2_power

    def __eq__(self, other):
        if isinstance(other, float):
            return float(self) == other
        if isinstance(other, PolyInW):
            return NotImplemented
        try:
            other = RationalScalar.coerce(other)
        except TypeError:
            return NotImplemented
        return (self.value, self.pi_power, self.sqrt2_power) == (other.value, other.pi_power, other.sqrt2_power)

    def __hash__(self):
        return hash((self.value, self.pi_power, self.sqrt2_power))

    def __repr__(self):
        parts = [str(self.value)]
        if self.pi_power:
            parts.append(f"pi^{self.pi_power}")
        if self.sqrt2_power:
            parts.append("sqrt2")
        return "RationalScalar(" + "*".join(parts) + ")"


def wallis_ratio(j: int) -> Fraction:
    """(2j-1)!!/(2j)!! as an exact fraction."""
    ratio = Fraction(1)
    for i in range(1, j + 1):
        ratio *= Fraction(2 * i - 1, 2 * i)
    return ratio


def wallis_moment(j: int) -> RationalScalar:
    """Integral of w**(2j) / sqrt(1 - w**2) over [0, 1], i.e. (pi/2)(2j-1)!!/(2j)!!."""
    if j < 0:
        raise DomainError(f"wallis_moment needs j >= 0, got {j}")
    return RationalScalar(wallis_ratio(j) / 2, pi_power=1)


class PolyInW:
    """Polynomial ``c_0 + c_1*w**2 + c_2*w**4 + ...`` in the square of an auxiliary variable.

    Used for the w-dependence of the substituted payoff integrand and, with the
    same arithmetic, for coefficients that are polynomials in sigma0**2.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        coeffs = list(coeffs)
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        self.coeffs = tuple(coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, i: int):
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else 0

    def __len__(self):
        return len(self.coeffs)

    def __add__(self, other):
        if not isinstance(other, PolyInW):
            other = PolyInW([other])
        n = max(len(self.coeffs), len(other.coeffs))
        return PolyInW(self[i] + other[i] for i in range(n))

    __radd__ = __add__

    def __neg__(self):
        return PolyInW(-c for c in self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PolyInW):
            return PolyInW(c * other for c in self.coeffs)
        if not self.coeffs or not other.coeffs:
            return PolyInW()
        out = [_zero_like(self.coeffs[0] * other.coeffs[0])] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return PolyInW(out)

    __rmul__ = __mul__

    def shifted(self, j: int) -> "PolyInW":
        """Multiply by w**(2j)."""
        return PolyInW([0] * j + list(self.coeffs))

    def evaluate(self, x):
        """Value at the auxiliary variable ``x`` (the polynomial is in ``x**2``)."""
        x2 = x * x
        result = 0
        for c in reversed(self.coeffs):
            result = result * x2 + c
        return result

    __call__ = evaluate

    def wallis_sum(self):
        """sum_i c_i (2i-1)!!/(2i)!!, the arcsine moment without its pi/2 factor."""
        total = 0
        for i, c in enumerate(self.coeffs):
            if c != 0:
                total = total + c * wallis_ratio(i)
        return total

    def arcsine_moment(self):
        """Integral of p(w**2)/sqrt(1-w**2) over w in [0, 1].

        Exact coefficients give a :class:`RationalScalar`; floats give a float.
        """
        total = self.wallis_sum()
        if isinstance(total, float):
            return 0.5 * math.pi * total
        return RationalScalar(_as_fraction(total) / 2, pi_power=1)

    def to_float(self) -> "PolyInW":
        return PolyInW(float(c) for c in self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, PolyInW):
            try:
                other = PolyInW([other])
            except TypeError:
                return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"PolyInW({list(self.coeffs)!r})"


# ============ Power series ============

def _combine_parity(p: Optional[str], q: Optional[str]) -> Optional[str]:
    if p is None or q is None:
        return None
    return EVEN if p == q else ODD


def _index_allowed(parity: Optional[str], n: int) -> bool:
    if parity == EVEN:
        return n % 2 == 0
    if parity == ODD:
        return n % 2 == 1
    return True


class PowerSeries:
    """Truncated power series ``c_0 + c_1 x + ... + c_N x**N``.

    :param coeffs: coefficients, padded with zeros or cut to ``order``.
    :param order: truncation order N (default ``len(coeffs) - 1``).
    :param parity: ``"even"``, ``"odd"`` or ``None``. A declared parity is
        checked against the coefficients and then propagated by the operations.
    """

    def __init__(self, coeffs: Sequence, order: Optional[int] = None, parity: Optional[str] = None):
        coeffs = list(coeffs)
        if order is None:
            if not coeffs:
                raise ValueError("empty coefficient list needs an explicit order")
            order = len(coeffs) - 1
        if order < 0:
            raise ValueError(f"order cannot be negative: {order}")
        zero = _zero_like(coeffs[0]) if coeffs else 0
        coeffs = coeffs[: order + 1] + [zero] * max(0, order + 1 - len(coeffs))
        if parity not in (None, EVEN, ODD):
            raise ValueError(f"unknown parity {parity!r}")
        if parity is not None:
            for n, c in enumerate(coeffs):
                if not _index_allowed(parity, n) and c != 0:
                    raise ValueError(f"{parity} series has nonzero coefficient at x^{n}")
        self.coeffs = coeffs
        self.order = order
        self.parity = parity

    # ----- construction helpers -----

    @classmethod
    def variable(cls, order: int, one=Fraction(1)) -> "PowerSeries":
        return cls([_zero_like(one), one], order=order, parity=ODD)

    @classmethod
    def constant(cls, value, order: int) -> "PowerSeries":
        return cls([value], order=order, parity=EVEN)

    # ----- container protocol -----

    def __getitem__(self, n: int):
        return self.coeffs[n]

    def __len__(self):
        return len(self.coeffs)

    def __iter__(self):
        return iter(self.coeffs)

    @property
    def zero(self):
        return _zero_like(self.coeffs[0])

    # ----- arithmetic -----

    def __add__(self, other):
        if not isinstance(other, PowerSeries):
            coeffs = list(self.coeffs)
            coeffs[0] = coeffs[0] + other
            parity = self.parity if self.parity == EVEN else None
            return PowerSeries(coeffs, self.order, parity if other != 0 else self.parity)
        order = min(self.order, other.order)
        coeffs = [self.coeffs[i] + other.coeffs[i] for i in range(order + 1)]
        parity = self.parity if self.parity == other.parity else None
        return PowerSeries(coeffs, order, parity)

    __radd__ = __add__

    def __neg__(self):
        return PowerSeries([-c for c in self.coeffs], self.order, self.parity)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PowerSeries):
            return ps_mul(self, other)
        return PowerSeries([c * other for c in self.coeffs], self.order, self.parity)

    def __rmul__(self, other):
        return PowerSeries([other * c for c in self.coeffs], self.order, self.parity)

    def __call__(self, x):
        """Evaluate the truncated polynomial at ``x``."""
        result = 0
        for c in reversed(self.coeffs):
            result = result * x + c
        return result

    def __eq__(self, other):
        if not isinstance(other, PowerSeries):
            return NotImplemented
        return self.order == other.order and all(a == b for a, b in zip(self.coeffs, other.coeffs))

    def __repr__(self):
        return f"PowerSeries({self.coeffs!r}, order={self.order}, parity={self.parity!r})"

    def map(self, fn: Callable) -> "PowerSeries":
        return PowerSeries([fn(c) for c in self.coeffs], self.order, self.parity)

    def to_float(self) -> "PowerSeries":
        def _f(c):
            return c.to_float() if isinstance(c, PolyInW) else float(c)
        return self.map(_f)

    def truncate(self, order: int) -> "PowerSeries":
        order = min(order, self.order)
        return PowerSeries(self.coeffs[: order + 1], order, self.parity)

    def shift(self, k: int = 1) -> "PowerSeries":
        """Multiply by x**k, keeping the order."""
        if k == 0:
            return self
        parity = None
        if self.parity is not None:
            parity = self.parity if k % 2 == 0 else {EVEN: ODD, ODD: EVEN}[self.parity]
        coeffs = [self.zero] * k + self.coeffs[: self.order + 1 - k]
        return PowerSeries(coeffs, self.order, parity)


def ps_mul(a: PowerSeries, b: PowerSeries) -> PowerSeries:
    """Cauchy product truncated to the smaller order; parity composes."""
    order = min(a.order, b.order)
    parity = _combine_parity(a.parity, b.parity)
    nz_a = [(i, c) for i, c in enumerate(a.coeffs[: order + 1]) if c != 0]
    nz_b = [(j, c) for j, c in enumerate(b.coeffs[: order + 1]) if c != 0]
    zero = _zero_like(a.coeffs[0] * b.coeffs[0])
    out = [zero] * (order + 1)
    for i, ca in nz_a:
        for j, cb in nz_b:
            n = i + j
            if n > order:
                break
            out[n] = out[n] + ca * cb
    return PowerSeries(out, order, parity)


def ps_compose(outer: PowerSeries, inner: PowerSeries) -> PowerSeries:
    """Formal composition ``outer(inner(x))`` truncated to the smaller order."""
    if inner.coeffs[0] != 0:
        raise DomainError("ps_compose needs an inner series with zero constant term")
    order = min(outer.order, inner.order)
    inner = inner.truncate(order)
    result = PowerSeries.constant(outer.coeffs[order], order)
    for k in range(order - 1, -1, -1):
        result = ps_mul(result, inner) + outer.coeffs[k]
    parity = None
    if inner.parity == ODD and outer.parity is not None:
        parity = outer.parity
    elif inner.parity == EVEN:
        parity = EVEN
    return PowerSeries(result.coeffs, order, parity)


def ps_pow(a: PowerSeries, alpha: Number) -> PowerSeries:
    """``a(x)**alpha`` for a series with constant term 1.

    Uses the recurrence obtained from ``b' a = alpha a' b``:
    n b_n = sum_{k=1..n} ((alpha+1) k - n) a_k b_{n-k}.
    """
    if a.coeffs[0] != 1:
        raise DomainError(f"ps_pow needs constant term 1, got {a.coeffs[0]!r}")
    if not isinstance(alpha, float):
        alpha = _as_fraction(alpha)
    order = a.order
    one = a.coeffs[0]
    b = [one] + [_zero_like(one)] * order
    nonzero = [(k, c) for k, c in enumerate(a.coeffs) if k > 0 and c != 0]
    for n in range(1, order + 1):
        if not _index_allowed(a.parity if a.parity == EVEN else None, n):
            continue
        acc = None
        for k, ak in nonzero:
            if k > n:
                break
            weight = (alpha + 1) * k - n
            if weight == 0:
                continue
            term = (weight * ak) * b[n - k]
            acc = term if acc is None else acc + term
        if acc is not None:
            b[n] = acc * Fraction(1, n)
    parity = EVEN if a.parity == EVEN else None
    return PowerSeries(b, order, parity)


def ps_pow_neg_half(a: PowerSeries) -> PowerSeries:
    """``a(x)**(-1/2)``, the binomial series of (1+x)^(-1/2) composed with ``a - 1``."""
    if a.coeffs[0] != 1:
        raise DomainError(f"ps_pow_neg_half needs constant term 1, got {a.coeffs[0]!r}")
    return ps_pow(a, Fraction(-1, 2))


def ps_reciprocal(a: PowerSeries) -> PowerSeries:
    """``1/a(x)`` for a series with a scalar, invertible constant term."""
    a0 = a.coeffs[0]
    if a0 == 0:
        raise DomainError("ps_reciprocal needs a nonzero constant term")
    inv0 = 1 / a0
    order = a.order
    b = [inv0] + [_zero_like(inv0)] * order
    nonzero = [(k, c) for k, c in enumerate(a.coeffs) if k > 0 and c != 0]
    for n in range(1, order + 1):
        acc = None
        for k, ak in nonzero:
            if k > n:
                break
            term = ak * b[n - k]
            acc = term if acc is None else acc + term
        if acc is not None:
            b[n] = -(acc * inv0)
    parity = EVEN if a.parity == EVEN else None
    return PowerSeries(b, order, parity)


def ps_reversion(a: PowerSeries) -> PowerSeries:
    """Compositional inverse ``b`` with ``a(b(x)) = x`` to the truncation order.

    Lagrange inversion: b_n = (1/n) [x^(n-1)] (x/a(x))^n.
    """
    if a.coeffs[0] != 0:
        raise DomainError("ps_reversion needs a(0) = 0")
    if a.order < 1 or a.coeffs[1] == 0:
        raise DomainError("ps_reversion needs a'(0) != 0")
    order = a.order
    shifted_parity = {ODD: EVEN, EVEN: ODD}.get(a.parity)
    phi = ps_reciprocal(PowerSeries(a.coeffs[1:], order - 1, shifted_parity))
    zero = _zero_like(phi.coeffs[0])
    b = [zero] * (order + 1)
    power = phi
    for n in range(1, order + 1):
        if n > 1:
            power = ps_mul(power, phi)
        b[n] = power.coeffs[n - 1] * Fraction(1, n)
    parity = ODD if a.parity == ODD else None
    return PowerSeries(b, order, parity)


# ============ Elementary series ============

def exp_series(order: int, scale: Number = 1) -> PowerSeries:
    """exp(scale*x)."""
    scale = scale if isinstance(scale, float) else _as_fraction(scale)
    return PowerSeries([scale ** n / factorial(n) for n in range(order + 1)], order)


def sinh_series(order: int) -> PowerSeries:
    return PowerSeries(
        [Fraction(1, factorial(n)) if n % 2 else Fraction(0) for n in range(order + 1)], order, ODD
    )


def cosh_series(order: int) -> PowerSeries:
    return PowerSeries(
        [Fraction(0) if n % 2 else Fraction(1, factorial(n)) for n in range(order + 1)], order, EVEN
    )


def sin_series(order: int) -> PowerSeries:
    return PowerSeries(
        [Fraction((-1) ** (n // 2), factorial(n)) if n % 2 else Fraction(0) for n in range(order + 1)],
        order,
        ODD,
    )


def cos_series(order: int) -> PowerSeries:
    return PowerSeries(
        [Fraction(0) if n % 2 else Fraction((-1) ** (n // 2), factorial(n)) for n in range(order + 1)],
        order,
        EVEN,
    )


def erf_core_series(order: int) -> PowerSeries:
    """E(x) = (sqrt(pi)/2) Erf(x) = sum (-1)^n x^(2n+1) / (n! (2n+1)), rational."""
    coeffs = [Fraction(0)] * (order + 1)
    for n in range((order - 1) // 2 + 1):
        coeffs[2 * n + 1] = Fraction((-1) ** n, factorial(n) * (2 * n + 1))
    return PowerSeries(coeffs, order, ODD)


def erf_series(order: int) -> PowerSeries:
    """Erf(x) with exact coefficients (2/sqrt(pi)) (-1)^n / (n! (2n+1))."""
    two_over_sqrt_pi = RationalScalar(2, pi_power=Fraction(-1, 2))
    return erf_core_series(order).map(lambda c: two_over_sqrt_pi * c)


def binomial_series(order: int, alpha: Number) -> PowerSeries:
    """(1+x)**alpha."""
    alpha = _as_fraction(alpha)
    coeffs = [Fraction(1)]
    for n in range(1, order + 1):
        coeffs.append(coeffs[-1] * (alpha - n + 1) / n)
    return PowerSeries(coeffs, order)
