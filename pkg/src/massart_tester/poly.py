"""Dense monomial-basis polynomials over extended-precision scalars.

The coefficient vector is the universal carrier for Chebyshev, Hermite and
sandwich polynomials.  Index i holds the coefficient of x^i.  Certified
evaluation and Gaussian integration run in mpfr; a float64 path exists for
plotting only.

Chebyshev and Hermite constructors build their coefficients in exact
integer/rational arithmetic and round once at the current working
precision, so the usual catastrophic growth of monomial coefficients does
not contaminate the recurrences themselves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2

from .precision import get_bits, mpfr, mpz, workprec

__all__ = [
    "Polynomial", "chebyshev", "chebyshev_over_x", "hermite_normalized",
    "evaluate", "evaluate_float", "gaussian_moment", "gaussian_expectation",
    "compose_affine", "antiderivative", "derivative", "power",
    "enumerate_multi_indices", "hermite_tensor_eval", "hermite_values_1d",
    "mul_int_exact", "chebyshev_int_coeffs",
    "DEGREE_CAP_DEFAULT", "MULTI_INDEX_CAP_DEFAULT", "DegreeCapExceeded",
]

DEGREE_CAP_DEFAULT = 200000
MULTI_INDEX_CAP_DEFAULT = 2000


class DegreeCapExceeded(ValueError):
    """Raised when an operation would produce a polynomial beyond the cap."""


def _trim(coeffs: list) -> tuple:
    n = len(coeffs)
    while n > 1 and coeffs[n - 1] == 0:
        n -= 1
    return tuple(coeffs[:n])


@dataclass(frozen=True)
class Polynomial:
    """Immutable dense polynomial; coeffs[i] multiplies x^i."""

    coeffs: tuple

    def __init__(self, coeffs: Iterable):
        cs = [c if isinstance(c, (type(mpfr(0)), type(mpz(0)))) else mpfr(c)
              for c in coeffs]
        if not cs:
            cs = [mpfr(0)]
        object.__setattr__(self, "coeffs", _trim(cs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0

    def coeffs_float(self) -> list:
        return [float(c) for c in self.coeffs]

    def __add__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] = out[i] + c
        return Polynomial(out)

    def __neg__(self) -> "Polynomial":
        return Polynomial([-c for c in self.coeffs])

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(_mul(list(self.coeffs), list(other.coeffs)))

    def scale(self, s) -> "Polynomial":
        s = mpfr(s)
        return Polynomial([c * s for c in self.coeffs])

    def reflect(self) -> "Polynomial":
        """p(x) -> p(-x)."""
        return Polynomial([-c if i % 2 else c for i, c in enumerate(self.coeffs)])


# ---------------------------------------------------------------------------
# multiplication kernels

def _mul_schoolbook(a: list, b: list) -> list:
    out = [mpfr(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] = out[i + j] + ai * bj
    return out


def _mul_karatsuba(a: list, b: list) -> list:
    n = max(len(a), len(b))
    if min(len(a), len(b)) <= 48:
        return _mul_schoolbook(a, b)
    h = n // 2
    a0, a1 = a[:h], a[h:]
    b0, b1 = b[:h], b[h:]
    if not a1 or not b1:
        # unbalanced: split the longer, multiply blockwise
        if len(a) < len(b):
            a, b = b, a
        out = [mpfr(0)] * (len(a) + len(b) - 1)
        for s in range(0, len(a), h):
            blk = _mul_karatsuba(a[s:s + h], b)
            for i, c in enumerate(blk):
                out[s + i] = out[s + i] + c
        return out
    z0 = _mul_karatsuba(a0, b0)
    z2 = _mul_karatsuba(a1, b1)
    sa = [x + y for x, y in zip(a0, a1)] + (a1[len(a0):] or a0[len(a1):])
    sb = [x + y for x, y in zip(b0, b1)] + (b1[len(b0):] or b0[len(b1):])
    z1 = _mul_karatsuba(sa, sb)
    out = [mpfr(0)] * (len(a) + len(b) - 1)
    for i, c in enumerate(z0):
        out[i] = out[i] + c
        if i + h < len(out):
            out[i + h] = out[i + h] - c
    for i, c in enumerate(z2):
        out[i + 2 * h] = out[i + 2 * h] + c
        out[i + h] = out[i + h] - c
    for i, c in enumerate(z1):
        out[i + h] = out[i + h] + c
    return out


def _pack_signed(digits: Sequence, width: int):
    """Evaluate sum digits[i] * 2^(i*width) by recursive halving."""
    n = len(digits)
    if n == 1:
        return mpz(digits[0])
    h = n // 2
    return _pack_signed(digits[:h], width) + (_pack_signed(digits[h:], width) << (width * h))


def _split_nonneg(value, n: int, width: int) -> list:
    if n == 1:
        return [value]
    h = n // 2
    mask = (mpz(1) << (width * h)) - 1
    lo = value & mask
    hi = value >> (width * h)
    return _split_nonneg(lo, h, width) + _split_nonneg(hi, n - h, width)


def mul_int_exact(a: Sequence, b: Sequence) -> list:
    """Exact product of integer-coefficient polynomials (lists of mpz).

    Kronecker substitution: pack into single integers with signed digit
    slots, multiply once in GMP, recover digits with a bias trick.
    """
    a = [mpz(x) for x in a]
    b = [mpz(x) for x in b]
    amax = max((x.bit_length() for x in a), default=1)
    bmax = max((x.bit_length() for x in b), default=1)
    w = amax + bmax + (min(len(a), len(b))).bit_length() + 2
    n_out = len(a) + len(b) - 1
    prod = _pack_signed(a, w) * _pack_signed(b, w)
    bias = mpz(1) << (w - 1)
    rep = ((mpz(1) << (n_out * w)) - 1) // ((mpz(1) << w) - 1)
    shifted = prod + bias * rep
    if shifted < 0:
        raise ArithmeticError("kronecker digit overflow")
    raw = _split_nonneg(shifted, n_out, w)
    return [d - bias for d in raw]


def _mul(a: list, b: list) -> list:
    if len(a) <= 48 or len(b) <= 48:
        return _mul_schoolbook(a, b)
    if all(gmpy2.is_integer(c) for c in a) and all(gmpy2.is_integer(c) for c in b):
        return [mpfr(c) for c in mul_int_exact([mpz(c) for c in a], [mpz(c) for c in b])]
    return _mul_karatsuba(a, b)


# ---------------------------------------------------------------------------
# constructors

def chebyshev_int_coeffs(m: int) -> list:
    """Exact integer coefficients of T_m (length m+1, mpz)."""
    if m == 0:
        return [mpz(1)]
    if m == 1:
        return [mpz(0), mpz(1)]
    # T_m(x) = sum_j a_j x^(m-2j), a_0 = 2^(m-1),
    # a_{j+1}/a_j = -(m-2j)(m-2j-1) / (4(j+1)(m-j-1))
    out = [mpz(0)] * (m + 1)
    a = mpz(1) << (m - 1)
    out[m] = a
    for j in range(m // 2):
        num = -(m - 2 * j) * (m - 2 * j - 1)
        den = 4 * (j + 1) * (m - j - 1)
        nxt, rem = divmod(a * num, den)
        if rem != 0:
            raise ArithmeticError("chebyshev coefficient recurrence not integral")
        a = nxt
        out[m - 2 * (j + 1)] = a
    return out


def chebyshev(m: int) -> Polynomial:
    """Chebyshev polynomial of the first kind, T_m.

    Satisfies T_m(cos t) = cos(m t), |T_m| <= 1 on [-1, 1], and the parity
    rule T_m(-x) = (-1)^m T_m(x).
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    return Polynomial([mpfr(c) for c in chebyshev_int_coeffs(m)])


def chebyshev_over_x(m: int) -> Polynomial:
    """T_m(x)/x for odd m; its value at 0 equals T_m'(0) = (-1)^((m-1)/2) m."""
    if m < 1 or m % 2 == 0:
        raise ValueError("m must be odd and >= 1")
    cs = chebyshev_int_coeffs(m)
    return Polynomial([mpfr(c) for c in cs[1:]])


def hermite_normalized(k: int) -> Polynomial:
    """Normalized probabilist's Hermite polynomial p_k / sqrt(k!).

    The p_k follow p_{k+1}(x) = x p_k(x) - k p_{k-1}(x); the normalized
    family is orthonormal under N(0,1).
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    prev = [mpz(1)]
    if k == 0:
        ints = prev
    else:
        cur = [mpz(0), mpz(1)]
        for n in range(1, k):
            nxt = [mpz(0)] + cur
            for i, c in enumerate(prev):
                nxt[i] -= n * c
            prev, cur = cur, nxt
        ints = cur
    norm = gmpy2.sqrt(mpfr(math.factorial(k)))
    return Polynomial([mpfr(c) / norm for c in ints])


# ---------------------------------------------------------------------------
# evaluation and calculus

def evaluate(p: Polynomial, x):
    """Horner evaluation in extended precision.

    Runs at the larger of the ambient precision and the precision carried
    by the coefficients, so polynomials materialized at elevated precision
    (whose monomial coefficients cancel catastrophically) evaluate
    correctly without caller-side context management.
    """
    bits = max(gmpy2.get_context().precision,
               max((c.precision for c in p.coeffs if hasattr(c, "precision")),
                   default=0))
    with workprec(bits):
        x = mpfr(x)
        acc = mpfr(0)
        for c in reversed(p.coeffs):
            acc = acc * x + c
        result = acc
    return result


def evaluate_float(p: Polynomial, x: float) -> float:
    """Fast double-precision Horner; for plotting only, never certification."""
    acc = 0.0
    for c in reversed(p.coeffs):
        acc = acc * x + float(c)
    return acc


def gaussian_moment(n: int):
    """E_{x~N(0,1)}[x^n]: 0 for odd n, (n-1)!! for even n (exact, as mpfr)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n % 2 == 1:
        return mpfr(0)
    acc = mpz(1)
    for i in range(1, n, 2):
        acc *= i
    return mpfr(acc)


def _log2_abs(x) -> float:
    if x == 0:
        return -1e9
    try:
        return float(gmpy2.log2(abs(mpfr(x))))
    except (OverflowError, ValueError):
        return -1e9


def _log2_double_factorial(n: int) -> float:
    if n <= 1:
        return 0.0
    return (math.lgamma(n + 1) - (n / 2) * math.log(2) - math.lgamma(n / 2 + 1)) / math.log(2)


def gaussian_expectation(p: Polynomial):
    """E_{x~N(0,1)}[p(x)] = sum_i coeff_i * gaussian_moment(i).

    The sum pairs potentially huge alternating coefficients against huge
    moments; the working precision is escalated from a float pre-pass over
    term magnitudes so the cancellation is absorbed exactly.
    """
    cs = p.coeffs
    max_term = max(
        (_log2_abs(c) + _log2_double_factorial(i)
         for i, c in enumerate(cs) if i % 2 == 0 and c != 0),
        default=0.0,
    )
    bits = max(get_bits(), int(max_term) + 256)
    with workprec(bits):
        acc = mpfr(0)
        df = mpz(1)           # (i-1)!! running product over even i
        for i in range(0, len(cs), 2):
            if i >= 2:
                df *= (i - 1)
            c = cs[i]
            if c != 0:
                acc = acc + mpfr(c) * mpfr(df)
        result = acc
    return mpfr(result)


def compose_affine(p: Polynomial, a, b) -> Polynomial:
    """q with q(x) = p(a*x + b); degree preserved for a != 0."""
    a = mpfr(a)
    b = mpfr(b)
    res = [p.coeffs[-1]]
    for c in reversed(p.coeffs[:-1]):
        nxt = [mpfr(0)] * (len(res) + 1)
        for j, r in enumerate(res):
            nxt[j + 1] += r * a
            nxt[j] += r * b
        nxt[0] += c
        res = nxt
    return Polynomial(res)


def antiderivative(p: Polynomial) -> Polynomial:
    """P with P' = p and P(0) = 0."""
    out = [mpfr(0)]
    for i, c in enumerate(p.coeffs):
        out.append(c / mpfr(i + 1))
    return Polynomial(out)


def derivative(p: Polynomial) -> Polynomial:
    if p.degree == 0:
        return Polynomial([mpfr(0)])
    return Polynomial([c * mpfr(i) for i, c in enumerate(p.coeffs)][1:])


def power(p: Polynomial, k: int, degree_cap: int = DEGREE_CAP_DEFAULT) -> Polynomial:
    """p^k by repeated squaring; degree = k * deg(p)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if p.degree * k > degree_cap:
        raise DegreeCapExceeded(
            f"power would reach degree {p.degree * k} > degree cap {degree_cap}")
    base = list(p.coeffs)
    result = None
    e = k
    while e:
        if e & 1:
            result = base if result is None else _mul(result, base)
        e >>= 1
        if e:
            base = _mul(base, base)
    return Polynomial(result)


# ---------------------------------------------------------------------------
# multi-indices and tensor Hermite evaluation

def enumerate_multi_indices(d_minus_1: int, l: int,
                            dim_cap: int = MULTI_INDEX_CAP_DEFAULT) -> list:
    """All alpha in N^(d-1) with 0 <= |alpha| <= l, graded lexicographic.

    Within each grade the first coordinate decreases, matching the layout
    used for the moment matrix; count = C(d-1+l, l).
    """
    if d_minus_1 < 1 or l < 0:
        raise ValueError("need d_minus_1 >= 1 and l >= 0")
    total = math.comb(d_minus_1 + l, l)
    if total > dim_cap:
        raise ValueError(
            f"multi-index count {total} exceeds dimension cap {dim_cap}")
    out = []

    def gen(prefix, remaining, slots):
        if slots == 1:
            out.append(tuple(prefix) + (remaining,))
            return
        for v in range(remaining, -1, -1):
            gen(prefix + [v], remaining - v, slots - 1)

    for g in range(l + 1):
        gen([], g, d_minus_1)
    return out


_HERMITE_NORMS = [math.sqrt(math.factorial(i)) for i in range(40)]


def hermite_values_1d(x: float, max_deg: int) -> list:
    """[He_0(x), ..., He_max_deg(x)] normalized, in float64."""
    vals = [1.0]
    if max_deg >= 1:
        vals.append(x)
    for n in range(1, max_deg):
        vals.append(x * vals[n] - n * vals[n - 1])
    return [v / _HERMITE_NORMS[i] for i, v in enumerate(vals)]


def hermite_tensor_eval(alpha: Sequence[int], z: Sequence[float]) -> float:
    """Product of univariate normalized Hermite values, He_alpha(z)."""
    if len(alpha) != len(z):
        raise ValueError("alpha and z must have equal length")
    out = 1.0
    for a, x in zip(alpha, z):
        if a:
            out *= hermite_values_1d(float(x), a)[a]
    return out
