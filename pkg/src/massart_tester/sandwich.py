"""Multiplicative sandwiching polynomials for h(x) = 1(x >= t).

Construction: an odd Chebyshev polynomial turned into a bump
f(y) = (T_m(y)/(m y))^k, normalized to g = f/I over [-1, 1], integrated
over a sliding window to get a step approximation

    p(x) = int_{(x-t-w)/B}^{(x-t)/B} g(y) dy,

and corrected into a lower sandwich

    p_-(x) = p(x - delta) - (Ccorr x / B)^(mk) - Ccorr 2^(-k/4),

with p_+(x) = 1 - p_-(2t - x).  Negative thresholds are handled by
reflection: q_-(x) = 1 - p_+(-x), q_+(x) = 1 - p_-(-x) for the pair built
at s = -t.

The bump power is computed exactly over the integers (Kronecker
substitution for the squarings), so certified quantities inherit no
rounding from the construction itself.  Verification offers three
independent routes for the Gaussian gap: the coefficient-times-moment sum
(exact shifted-moment recurrence at escalated precision), a Fubini-style
panel quadrature in the bump variable, and the adaptive quadrature oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import gmpy2

from .precision import get_bits, mpfr, mpz, workprec
from .poly import (
    Polynomial, DegreeCapExceeded, DEGREE_CAP_DEFAULT,
    chebyshev_int_coeffs, chebyshev_over_x, mul_int_exact,
    antiderivative, compose_affine, power,
)
from .quadrature import quadrature_oracle, gauss_legendre, gaussian_pdf

__all__ = [
    "SandwichConstants", "SandwichParams", "SandwichPair", "VerifyReport",
    "DEFAULT_CONSTANTS", "PROFILE_VERSION",
    "select_params", "bump_f", "normalization", "step_poly",
    "build_sandwich", "verify_pair", "calibrate_constants",
    "quadrature_oracle", "normal_sf", "normal_cdf",
    "InfeasibleParameters", "BuildVerificationError", "CalibrationError",
]


class InfeasibleParameters(ValueError):
    """Requested (t, alpha) needs a degree or geometry beyond the caps."""


class BuildVerificationError(RuntimeError):
    """Construction succeeded but a quick sanity check of the pair failed."""


class CalibrationError(RuntimeError):
    """Coordinate search exhausted its budget without a passing profile."""


def normal_sf(t):
    """Pr[x >= t] for x ~ N(0,1), extended precision."""
    return gmpy2.erfc(mpfr(t) / gmpy2.sqrt(mpfr(2))) / 2


def normal_cdf(t):
    return gmpy2.erfc(-mpfr(t) / gmpy2.sqrt(mpfr(2))) / 2


# ---------------------------------------------------------------------------
# constants and parameters

@dataclass(frozen=True)
class SandwichConstants:
    """Schedule constants of the construction.

    c0 and c1 come from the bump's concentration and decay regions; the
    remaining constants scale the window, degree and correction schedule.
    The shipped defaults were fixed by `calibrate_constants` and are
    versioned; see PROFILE_VERSION.
    """
    c0: float = 0.5
    c1: float = 1.05
    Cw: float = 3.2
    Ck: float = 15.2
    Cm: float = 112.0
    CB: float = 1.3
    Ccorr: float = 2.0

    def __post_init__(self):
        for name in ("c0", "c1", "Cw", "Ck", "Cm", "CB", "Ccorr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"constant {name} must be positive")


PROFILE_VERSION = "desk-2026.08"
DEFAULT_CONSTANTS = SandwichConstants()


@dataclass(frozen=True)
class SandwichParams:
    """Resolved schedule for one (t, alpha) cell; t >= 0 after reflection."""
    t: float
    alpha: float
    m: int
    k: int
    window_width: float
    B: float
    delta_bump: float

    @property
    def degree_bound(self) -> int:
        return self.m * self.k


def select_params(t: float, alpha: float,
                  consts: SandwichConstants = DEFAULT_CONSTANTS,
                  degree_cap: int = DEGREE_CAP_DEFAULT) -> SandwichParams:
    """Apply the parameter schedule at threshold t >= 0.

    w = Cw (sqrt(log(1/alpha)) + t); k = 2 ceil(Ck (t^2 + log(1/alpha)))
    raised to 2 ceil(log2 m) if needed; m = 2 ceil(Cm (t+1)^2
    (t^2 + log(1/alpha)) / alpha^2) + 1; B = CB sqrt(mk);
    delta = c1 B / m.
    """
    if not 0 < alpha < 0.5:
        raise InfeasibleParameters(f"alpha must be in (0, 1/2), got {alpha}")
    if t < 0:
        raise ValueError("select_params expects t >= 0; reflection is handled by build_sandwich")
    L = math.log(1.0 / alpha)
    m = 2 * math.ceil(consts.Cm * (t + 1) ** 2 * (t * t + L) / alpha ** 2) + 1
    k = 2 * math.ceil(consts.Ck * (t * t + L))
    k = max(k, 2 * math.ceil(math.log2(m)))
    if k % 2:
        k += 1
    if m * k > degree_cap:
        raise InfeasibleParameters(
            f"schedule degree m*k = {m}*{k} = {m * k} exceeds degree cap {degree_cap} "
            f"at t={t}, alpha={alpha}")
    w = consts.Cw * (math.sqrt(L) + t)
    B = consts.CB * math.sqrt(m * k)
    delta = consts.c1 * B / m
    if B < 2 * (t + w + delta):
        raise InfeasibleParameters(
            f"window containment violated: B={B:.3g} < 2(t+w+delta)={2*(t+w+delta):.3g}")
    return SandwichParams(t=float(t), alpha=float(alpha), m=m, k=k,
                          window_width=w, B=B, delta_bump=delta)


# ---------------------------------------------------------------------------
# public small-scale constructors (spec operations)

def bump_f(m: int, k: int, degree_cap: int = DEGREE_CAP_DEFAULT) -> Polynomial:
    """The bump polynomial (T_m(x)/(m x))^k; degree (m-1)k, f(0) = 1."""
    if m < 3 or m % 2 == 0:
        raise ValueError("m must be odd and >= 3")
    if k < 2 or k % 2 == 1:
        raise ValueError("k must be even and >= 2")
    if (m - 1) * k > degree_cap:
        raise DegreeCapExceeded(
            f"bump degree {(m - 1) * k} exceeds degree cap {degree_cap}")
    ints = _bump_int_coeffs(m, k)
    scale = mpfr(m) ** (-k)
    out = [mpfr(0)] * ((m - 1) * k + 1)
    for j, q in enumerate(ints):
        out[2 * j] = mpfr(q) * scale
    return Polynomial(out)


def _bump_int_coeffs(m: int, k: int) -> list:
    """Exact mpz coefficients of (T_m(x)/x)^k in the variable u = x^2."""
    q = chebyshev_int_coeffs(m)[1::2]      # T_m/x has only even x-powers
    result = None
    base = [mpz(c) for c in q]
    e = k
    while e:
        if e & 1:
            result = base if result is None else mul_int_exact(result, base)
        e >>= 1
        if e:
            base = mul_int_exact(base, base)
    return result


def normalization(mass_poly: Polynomial):
    """I = int_{-1}^{1} f(x) dx, exactly via the antiderivative at +-1."""
    F = antiderivative(mass_poly)
    from .poly import evaluate
    return evaluate(F, 1) - evaluate(F, -1)


def step_poly(params: SandwichParams) -> Polynomial:
    """The window-integrated normalized bump p; degree at most (m-1)k + 1.

    Small-scale reference path through the public polynomial ops; the
    builder uses an equivalent exact pipeline for large degrees.  The
    monomial coefficients of p cancel catastrophically when evaluated, so
    the whole construction runs at a precision sized from the exact bump
    coefficients and the returned Polynomial carries that precision.
    """
    deg = (params.m - 1) * params.k
    q_bits = max(c.bit_length() for c in _bump_int_coeffs(params.m, params.k))
    bits = q_bits + deg + 384
    with workprec(bits):
        f = bump_f(params.m, params.k)
        I = normalization(f)
        G = antiderivative(f.scale(1 / I))
        invB = mpfr(1) / mpfr(params.B)
        hi = compose_affine(G, invB, -mpfr(params.t) * invB)
        lo = compose_affine(G, invB,
                            (-mpfr(params.t) - mpfr(params.window_width)) * invB)
        return hi - lo


# ---------------------------------------------------------------------------
# exact bump pipeline and structured evaluators

class _Bump:
    """Certified closed-form evaluators for the bump, plus exact coefficients.

    Mass integrals over [-1, 1] use panel Gauss-Legendre in theta
    (y = sin theta) with panels aligned to the oscillations of T_m;
    outside [-1, 1] the cosh closed form is integrated on log-spaced
    panels with a cached cumulative table.  The exact mpz coefficients of
    (T_m/x)^k in u = y^2 are built lazily; only the coefficient-moment
    route and materialization need them.
    """

    NODES_TABLE = 48
    NODES_PARTIAL = 32
    TAIL_YMAX = 16.0
    TAIL_PANELS = 320

    def __init__(self, m: int, k: int, bits: int):
        self.m, self.k = m, k
        self.bits = bits
        self._Q = None
        self._tail_edges = None
        with workprec(bits):
            self._build_tables()

    @property
    def Q(self) -> list:
        if self._Q is None:
            self._Q = _bump_int_coeffs(self.m, self.k)
        return self._Q

    # -- closed-form values -------------------------------------------------
    def f_val(self, y):
        """f(y) in mpfr at ambient precision; exact formulae, no coefficients."""
        m, k = self.m, self.k
        ay = abs(mpfr(y))
        if ay == 0:
            return mpfr(1)
        if ay <= 1:
            th = gmpy2.asin(ay)
            num = abs(gmpy2.sin(m * th))
            den = m * ay
            return (num / den) ** k
        a = gmpy2.acosh(ay)
        num = gmpy2.cosh(m * a)
        return (num / (m * ay)) ** k

    def _f_theta(self, th):
        # f(sin th) * cos th, the [0, pi/2] integrand after y = sin th
        m, k = self.m, self.k
        s = gmpy2.sin(th)
        if s == 0:
            return gmpy2.cos(th)
        r = abs(gmpy2.sin(m * th)) / (m * s)
        return (r ** k) * gmpy2.cos(th)

    # -- panel tables --------------------------------------------------------
    def _build_tables(self):
        m = self.m
        pi = gmpy2.const_pi()
        half_pi = pi / 2
        n_panels = (m + 1) // 2
        edges = [min(j * pi / m, half_pi) for j in range(n_panels + 1)]
        if edges[-1] < half_pi:
            edges.append(half_pi)
        self.theta_edges = edges
        nodes, weights = gauss_legendre(self.NODES_TABLE)
        masses = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = (lo + hi) / 2
            half = (hi - lo) / 2
            acc = mpfr(0)
            for x, w in zip(nodes, weights):
                acc += w * self._f_theta(mid + half * x)
            masses.append(acc * half)
        self.panel_mass = masses
        cum = [mpfr(0)]
        for v in masses:
            cum.append(cum[-1] + v)
        self.panel_cum = cum
        self.half_mass = cum[-1]          # int_0^1 f
        self.I = 2 * self.half_mass       # int_{-1}^{1} f
        # scale-free: masses of f, not g; normalize at use sites

    def _locate_panel(self, th) -> int:
        lo, hi = 0, len(self.theta_edges) - 2
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.theta_edges[mid] <= th:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def _partial_theta(self, th_lo, th_hi):
        if th_hi <= th_lo:
            return mpfr(0)
        nodes, weights = gauss_legendre(self.NODES_PARTIAL)
        mid = (th_lo + th_hi) / 2
        half = (th_hi - th_lo) / 2
        part = mpfr(0)
        for x, w in zip(nodes, weights):
            part += w * self._f_theta(mid + half * x)
        return part * half

    def int_f_0_to(self, y):
        """int_0^y f for y in [0, 1], certified panel + partial GL."""
        y = mpfr(y)
        if y <= 0:
            return mpfr(0)
        if y >= 1:
            return self.half_mass
        th = gmpy2.asin(y)
        j = self._locate_panel(th)
        return self.panel_cum[j] + self._partial_theta(self.theta_edges[j], th)

    def int_f_core(self, y_lo, y_hi):
        """int over [y_lo, y_hi] with 0 <= y_lo <= y_hi <= 1 as a direct sum
        of positive panel masses (no CDF differencing, no cancellation)."""
        y_lo, y_hi = mpfr(y_lo), mpfr(y_hi)
        if y_hi <= y_lo:
            return mpfr(0)
        th1 = gmpy2.asin(y_lo)
        th2 = gmpy2.asin(y_hi) if y_hi < 1 else self.theta_edges[-1]
        j1 = self._locate_panel(th1)
        j2 = self._locate_panel(th2)
        if j1 == j2:
            return self._partial_theta(th1, th2)
        acc = self._partial_theta(th1, self.theta_edges[j1 + 1])
        for j in range(j1 + 1, j2):
            acc += self.panel_mass[j]
        acc += self._partial_theta(self.theta_edges[j2], th2)
        return acc

    def _build_tail_table(self):
        # cumulative int_1^{edge_j} f on log-spaced edges out to TAIL_YMAX
        with workprec(self.bits):
            n = self.TAIL_PANELS
            lmax = gmpy2.log(mpfr(self.TAIL_YMAX))
            edges = [gmpy2.exp(lmax * j / n) for j in range(n + 1)]
            edges[0] = mpfr(1)
            nodes, weights = gauss_legendre(self.NODES_TABLE)
            masses = []
            for lo, hi in zip(edges[:-1], edges[1:]):
                mid = (lo + hi) / 2
                half = (hi - lo) / 2
                acc = mpfr(0)
                for x, w in zip(nodes, weights):
                    acc += w * self.f_val(mid + half * x)
                masses.append(acc * half)
            self._tail_edges = edges
            self._tail_mass = masses

    def _tail_locate(self, y) -> int:
        edges = self._tail_edges
        lo_i, hi_i = 0, len(edges) - 2
        while lo_i < hi_i:
            mid = (lo_i + hi_i + 1) // 2
            if edges[mid] <= y:
                lo_i = mid
            else:
                hi_i = mid - 1
        return lo_i

    def _tail_partial(self, y_lo, y_hi):
        if y_hi <= y_lo:
            return mpfr(0)
        nodes, weights = gauss_legendre(self.NODES_PARTIAL)
        mid = (y_lo + y_hi) / 2
        half = (y_hi - y_lo) / 2
        part = mpfr(0)
        for x, w in zip(nodes, weights):
            part += w * self.f_val(mid + half * x)
        return part * half

    def int_f_tail(self, y_lo, y_hi):
        """int over [y_lo, y_hi] with 1 <= y_lo <= y_hi, direct panel sums."""
        y_lo, y_hi = mpfr(y_lo), mpfr(y_hi)
        if y_hi <= y_lo:
            return mpfr(0)
        if self._tail_edges is None:
            self._build_tail_table()
        if y_hi > self._tail_edges[-1]:
            raise ValueError(f"tail query {float(y_hi)} beyond table range "
                             f"{float(self._tail_edges[-1])}")
        edges = self._tail_edges
        j1 = self._tail_locate(y_lo)
        j2 = self._tail_locate(y_hi)
        if j1 == j2:
            return self._tail_partial(y_lo, y_hi)
        acc = self._tail_partial(y_lo, edges[j1 + 1])
        for j in range(j1 + 1, j2):
            acc += self._tail_mass[j]
        acc += self._tail_partial(edges[j2], y_hi)
        return acc

    def _int_f_nonneg(self, a, b):
        """int over [a, b] with 0 <= a <= b, split at y = 1."""
        acc = mpfr(0)
        if a < 1:
            acc += self.int_f_core(a, min(b, mpfr(1)))
        if b > 1:
            acc += self.int_f_tail(max(a, mpfr(1)), b)
        return acc

    def int_f(self, a, b):
        """int_a^b f for any a <= b, as sums of positive panel masses.

        Intervals are split at 0 and +-1 and each piece is accumulated
        directly, so tiny window masses keep full relative accuracy even
        when nearby cumulative masses are large.
        """
        a, b = mpfr(a), mpfr(b)
        if b < a:
            return -self.int_f(b, a)
        if a >= 0:
            return self._int_f_nonneg(a, b)
        if b <= 0:
            return self._int_f_nonneg(-b, -a)
        return self._int_f_nonneg(mpfr(0), -a) + self._int_f_nonneg(mpfr(0), b)


class StructuredPair:
    """Certified evaluators and gap integrals for one built pair (t >= 0)."""

    def __init__(self, params: SandwichParams, consts: SandwichConstants,
                 bits: Optional[int] = None):
        self.params = params
        self.consts = consts
        self.bits = bits or max(get_bits(), 512)
        self.bump = _Bump(params.m, params.k, self.bits)
        with workprec(self.bits):
            self.I = self.bump.I
            self.csub = mpfr(consts.Ccorr) * mpfr(2) ** mpfr(-params.k / 4.0)
            self.B = mpfr(params.B)
            self.w = mpfr(params.window_width)
            self.delta = mpfr(params.delta_bump)
            self.t = mpfr(params.t)
            self.Ccorr = mpfr(consts.Ccorr)

    # -- pointwise -----------------------------------------------------------
    def p_of(self, z):
        """p(z) = int over the sliding window of g."""
        with workprec(self.bits):
            u2 = (mpfr(z) - self.t) / self.B
            u1 = u2 - self.w / self.B
            return self.bump.int_f(u1, u2) / self.I

    def corr_at(self, x):
        with workprec(self.bits):
            base = self.Ccorr * abs(mpfr(x)) / self.B
            if base == 0:
                return mpfr(0)
            return base ** (self.params.m * self.params.k)

    def pminus_at(self, x):
        with workprec(self.bits):
            return self.p_of(mpfr(x) - self.delta) - self.corr_at(x) - self.csub

    def pplus_at(self, x):
        with workprec(self.bits):
            return 1 - self.pminus_at(2 * self.t - mpfr(x))

    # -- gap: coefficient-times-shifted-moment route --------------------------
    def _nu_exponents(self, c, n: int, probe_bits: int = 256) -> list:
        """log2 magnitudes of shifted moments nu_j(c) = E[(x-c)^j], via a
        moderate-precision run of the recurrence."""
        with workprec(probe_bits):
            c = mpfr(c)
            nu0, nu1 = mpfr(1), -c
            exps = [0.0, float(gmpy2.log2(abs(nu1))) if nu1 != 0 else -1e9]
            for j in range(1, n):
                nu0, nu1 = nu1, j * nu0 - c * nu1
                exps.append(float(gmpy2.log2(abs(nu1))) if nu1 != 0 else -1e9)
        return exps

    def _required_bits(self, centers) -> int:
        """Escalated precision for the moment-route gap."""
        m, k = self.params.m, self.params.k
        n = (m - 1) * k + 1
        log2_B = math.log2(self.params.B)
        log2_mk = k * math.log2(m)
        with workprec(256):
            log2_I = float(gmpy2.log2(abs(self.I)))
        worst = 0.0
        for c in centers:
            exps = self._nu_exponents(c, n)
            for j, q in enumerate(self.bump.Q):
                i = 2 * j + 1
                if q == 0:
                    continue
                term = (q.bit_length() - math.log2(2 * j + 1) - log2_mk - log2_I
                        - i * log2_B + exps[i])
                worst = max(worst, term)
        return max(get_bits(), int(worst) + 320)

    def _moment_sum(self, c, bits: int):
        """S(c) = sum over odd i of G_i B^(-i) E[(x-c)^i] at `bits`."""
        m, k = self.params.m, self.params.k
        with workprec(bits):
            c = mpfr(c)
            B = mpfr(self.params.B)
            scale = mpfr(1) / (mpfr(m) ** k * mpfr(self.I))
            nu0, nu1 = mpfr(1), -c      # nu_0, nu_1
            acc = mpfr(0)
            Binv = 1 / B
            Bpow = Binv                 # B^-1 for i=1
            j = 0
            for i in range(1, (m - 1) * k + 2):
                if i % 2 == 1:
                    q = self.bump.Q[j]
                    if q != 0:
                        g_i = mpfr(q) * scale / (2 * j + 1)
                        acc += g_i * Bpow * nu1
                    j += 1
                nu0, nu1 = nu1, i * nu0 - c * nu1
                Bpow = Bpow * Binv
            return acc

    def _corr_expectation(self, center, bits: int):
        """E[(Ccorr (x - center')/B)^(mk)] with the moment taken at shift."""
        mk = self.params.m * self.params.k
        with workprec(bits):
            c = mpfr(center)
            nu0, nu1 = mpfr(1), -c
            for j in range(1, mk):
                nu0, nu1 = nu1, j * nu0 - c * nu1
            # nu1 now = E[(x-c)^(mk)] (even, positive)
            return (mpfr(self.Ccorr) / mpfr(self.params.B)) ** mk * nu1

    def gap_expectation_moment(self):
        """Certified E[p_+ - p_-] via the coefficient/moment pairing."""
        s = self.params.t
        a = s + self.params.delta_bump
        b = a + self.params.window_width
        c1r = s - self.params.delta_bump
        c2r = c1r - self.params.window_width
        bits = self._required_bits([a, b, abs(c1r), abs(c2r), 2 * s])
        with workprec(bits):
            Sa = self._moment_sum(a, bits)
            Sb = self._moment_sum(b, bits)
            Sc1 = self._moment_sum(c1r, bits)
            Sc2 = self._moment_sum(c2r, bits)
            corr0 = self._corr_expectation(0, bits)
            corr2s = self._corr_expectation(2 * s, bits)
            csub = mpfr(self.consts.Ccorr) * mpfr(2) ** mpfr(-self.params.k / 4.0)
            e_pm = (Sa - Sb) - corr0 - csub                 # E[p_-(x)]
            e_pm_refl = (-Sc1 + Sc2) - corr2s - csub        # E[p_-(2s-x)]
            gap = 1 - e_pm_refl - e_pm
            return mpfr(gap), bits

    # -- gap: Fubini panel route (fast, used by calibration) ------------------
    PHI_CLAMP = 12.0   # |z| beyond which Phi-differences (< 2e-33) are dropped

    def gap_expectation_fubini(self, bits: Optional[int] = None):
        """E[p_+ - p_-] integrating g against Gaussian window weights.

        Window weights with both endpoints beyond +-PHI_CLAMP contribute
        less than 2e-33 each and are skipped; MPFR erfc is very slow in
        exactly that regime.
        """
        prm = self.params
        s, B, w, D = prm.t, prm.B, prm.window_width, prm.delta_bump
        bits = bits or self.bits
        clamp = self.PHI_CLAMP
        with workprec(bits):
            sqrt2 = gmpy2.sqrt(mpfr(2))

            def phi_window(z_lo, z_hi):
                # Phi(z_hi) - Phi(z_lo) for z_lo < z_hi
                if float(z_lo) >= clamp or float(z_hi) <= -clamp:
                    return mpfr(0)
                return (gmpy2.erfc(-z_hi / sqrt2) - gmpy2.erfc(-z_lo / sqrt2)) / 2

            nodes, weights = gauss_legendre(self.bump.NODES_TABLE, bits)
            a = s + D

            def weight_plusx(y):
                # E_x 1{By + a <= x <= By + a + w} terms
                return phi_window(B * y + a, B * y + a + w)

            def weight_reflect(y):
                return phi_window(s - D - w - B * y, s - D - B * y)

            e_p = mpfr(0)
            e_pr = mpfr(0)
            for lo, hi in zip(self.bump.theta_edges[:-1], self.bump.theta_edges[1:]):
                mid = (lo + hi) / 2
                half = (hi - lo) / 2
                acc_p = mpfr(0)
                acc_r = mpfr(0)
                for xn, wn in zip(nodes, weights):
                    th = mid + half * xn
                    y = gmpy2.sin(th)
                    fv = self.bump._f_theta(th)
                    acc_p += wn * fv * (weight_plusx(y) + weight_plusx(-y))
                    acc_r += wn * fv * (weight_reflect(y) + weight_reflect(-y))
                e_p += acc_p * half
                e_pr += acc_r * half
            e_p = e_p / self.I
            e_pr = e_pr / self.I
            # |y| > 1 tails are dominated by the Gaussian weight at the
            # calibrated B (below exp(-0.1 mk)); they are not chased here
            corr0 = self._corr_expectation(0, max(bits, 1024))
            corr2s = self._corr_expectation(2 * prm.t, max(bits, 1024))
            csub = mpfr(self.consts.Ccorr) * mpfr(2) ** mpfr(-prm.k / 4.0)
            gap = 1 - e_pr - e_p + corr0 + corr2s + 2 * csub
            return mpfr(gap)


# ---------------------------------------------------------------------------
# public pair

@dataclass
class SandwichPair:
    """The built pair; p_minus/p_plus materialize lazily at record precision.

    Certified verification never reads the materialized coefficient
    vectors; it runs on the structured evaluators (exact integer bump plus
    closed forms).  The coefficient vectors are the portable record of the
    polynomials and feed the small-scale cross-checks.
    """
    params: SandwichParams
    constants: SandwichConstants
    reflected: bool
    original_t: float
    structured: StructuredPair = field(repr=False)
    _p_minus: Optional[Polynomial] = field(default=None, repr=False)
    _p_plus: Optional[Polynomial] = field(default=None, repr=False)

    @property
    def degree_bound(self) -> int:
        return self.params.m * self.params.k

    def pminus_at(self, x):
        if self.reflected:
            return 1 - self.structured.pplus_at(-mpfr(x))
        return self.structured.pminus_at(x)

    def pplus_at(self, x):
        if self.reflected:
            return 1 - self.structured.pminus_at(-mpfr(x))
        return self.structured.pplus_at(x)

    def _materialize(self):
        if self._p_minus is not None:
            return
        pm, pp = _materialize_pair(self.structured)
        if self.reflected:
            pm_r = Polynomial([mpfr(1)]) - pp.reflect()
            pp_r = Polynomial([mpfr(1)]) - pm.reflect()
            pm, pp = pm_r, pp_r
        self._p_minus, self._p_plus = pm, pp

    @property
    def p_minus(self) -> Polynomial:
        self._materialize()
        return self._p_minus

    @property
    def p_plus(self) -> Polynomial:
        self._materialize()
        return self._p_plus


def _taylor_shift(coeffs: list, s, threshold: int = 48) -> list:
    """Coefficients of p(v + s) from those of p(v); divide and conquer."""
    from .poly import _mul

    n = len(coeffs)
    if n <= threshold:
        res = [coeffs[-1]]
        for c in reversed(coeffs[:-1]):
            nxt = [mpfr(0)] * (len(res) + 1)
            for j, r in enumerate(res):
                nxt[j + 1] += r
                nxt[j] += r * s
            nxt[0] += c
            res = nxt
        return res
    h = n // 2
    lo = _taylor_shift(coeffs[:h], s, threshold)
    hi = _taylor_shift(coeffs[h:], s, threshold)
    # (v + s)^h by repeated squaring of [s, 1]
    base = [mpfr(s), mpfr(1)]
    e = h
    pw = None
    while e:
        if e & 1:
            pw = base if pw is None else _mul(pw, base)
        e >>= 1
        if e:
            base = _mul(base, base)
    shifted_hi = _mul(hi, pw)      # length len(hi) + h
    out = list(shifted_hi)
    if len(out) < n:
        out += [mpfr(0)] * (n - len(out))
    for i, c in enumerate(lo):
        out[i] = out[i] + c
    return out


def _materialize_pair(sp: StructuredPair, record_bits: int = 512):
    """Monomial-in-x coefficient vectors of (p_-, p_+) for the s-build.

    Work runs at an elevated precision chosen from the shift headroom so
    the record coefficients are accurate at `record_bits`.
    """
    prm = sp.params
    m, k = prm.m, prm.k
    n = (m - 1) * k + 2
    # headroom: shifts in v-space are by |s~| = (t + delta + w)/B < 1
    shift_mag = (prm.t + prm.delta_bump + prm.window_width) / prm.B
    headroom = int(1.45 * shift_mag * n) + 64
    bits = record_bits + headroom + 512
    with workprec(bits):
        scale = mpfr(1) / (mpfr(m) ** k * mpfr(sp.I))
        Gv = [mpfr(0)] * n
        for j, q in enumerate(sp.bump.Q):
            Gv[2 * j + 1] = mpfr(q) * scale / (2 * j + 1)
        B = mpfr(prm.B)
        a_t = (mpfr(prm.t) + mpfr(prm.delta_bump)) / B
        b_t = a_t + mpfr(prm.window_width) / B
        ga = _taylor_shift(Gv, -a_t)
        gb = _taylor_shift(Gv, -b_t)
        mk = m * k
        coeffs = [mpfr(0)] * (mk + 1)
        Bpow = mpfr(1)
        for i in range(len(ga)):
            coeffs[i] = (ga[i] - gb[i]) * Bpow
            Bpow = Bpow / B
        corr_coeff = (mpfr(sp.consts.Ccorr) / B) ** mk
        coeffs[mk] -= corr_coeff
        coeffs[0] -= sp.csub
        with workprec(record_bits):
            pm = Polynomial([mpfr(c) for c in coeffs])
            if prm.t == 0:
                pp = Polynomial([mpfr(1)]) - pm.reflect()
            else:
                # p_+(x) = 1 - p_-(2t - x)
                pp = Polynomial([mpfr(1)]) - compose_affine(pm, -1, 2 * mpfr(prm.t))
    return pm, pp


def build_sandwich(t: float, alpha: float,
                   consts: SandwichConstants = DEFAULT_CONSTANTS,
                   degree_cap: int = DEGREE_CAP_DEFAULT,
                   quick_check: bool = True,
                   bits: Optional[int] = None) -> SandwichPair:
    """Build the sandwiching pair for h(x) = 1(x >= t) at accuracy alpha.

    For t < 0 the pair is built at s = -t and reflected.  `quick_check`
    runs a coarse pointwise scan and raises BuildVerificationError with
    the first violated property if the constants are too small.
    """
    if not 0 < alpha < 0.5:
        raise InfeasibleParameters(f"alpha must be in (0, 1/2), got {alpha}")
    reflected = t < 0
    s = -t if reflected else t
    params = select_params(s, alpha, consts, degree_cap=degree_cap)
    structured = StructuredPair(params, consts, bits=bits)
    pair = SandwichPair(params=params, constants=consts, reflected=reflected,
                        original_t=float(t), structured=structured)
    if quick_check:
        rep = verify_pair(pair, grid_size=1000, tail_points=40, fast=True)
        if not rep.passed:
            raise BuildVerificationError(
                f"quick verification failed: {rep.first_violation}")
    return pair


# ---------------------------------------------------------------------------
# verification

@dataclass
class VerifyReport:
    t: float
    alpha: float
    m: int
    k: int
    B: float
    w: float
    delta_bump: float
    degree: int
    gap_ratio: float
    max_violation: float
    pass_pointwise: bool
    pass_gap: bool
    passed: bool
    gap_expectation: float
    head_probability: float
    moment_route_bits: int
    quad_gap_ratio: Optional[float] = None
    quad_agreement: Optional[float] = None
    fubini_gap_ratio: Optional[float] = None
    grid_size: int = 0
    first_violation: str = ""

    def to_json_dict(self) -> dict:
        d = {
            "t": self.t, "alpha": self.alpha, "m": self.m, "k": self.k,
            "B": self.B, "w": self.w, "delta_bump": self.delta_bump,
            "degree": self.degree, "gap_ratio": self.gap_ratio,
            "max_violation": self.max_violation, "pass": self.passed,
        }
        d.update({
            "pass_pointwise": self.pass_pointwise, "pass_gap": self.pass_gap,
            "gap_expectation": self.gap_expectation,
            "head_probability": self.head_probability,
            "moment_route_bits": self.moment_route_bits,
            "quad_gap_ratio": self.quad_gap_ratio,
            "quad_agreement": self.quad_agreement,
            "fubini_gap_ratio": self.fubini_gap_ratio,
            "grid_size": self.grid_size,
            "first_violation": self.first_violation,
        })
        return d


POINTWISE_SLACK = mpfr("1e-30")


def verify_pair(pair: SandwichPair, grid_size: int = 10000,
                range_mult: float = 3.0, tail_points: int = 100,
                tail_mult: float = 10.0, fast: bool = False) -> VerifyReport:
    """Check pointwise domination and the multiplicative Gaussian gap.

    Pointwise: p_- <= h <= p_+ at `grid_size` uniform points on
    [-range_mult B, range_mult B] plus log-spaced tail points out to
    tail_mult B, all in extended precision (violations beyond 1e-30 fail).
    Gap: E[p_+ - p_-] / Pr[x >= t] <= alpha, certified by the
    coefficient-moment route and cross-checked against the quadrature
    oracle (skipped in fast mode, which uses the Fubini panel route).
    """
    prm = pair.params
    t = pair.original_t
    B = prm.B
    xs = [(-range_mult * B) + (2 * range_mult * B) * i / (grid_size - 1)
          for i in range(grid_size)]
    half_tail = max(1, tail_points // 2)
    ratio = (tail_mult / range_mult) ** (1.0 / (half_tail - 1)) if half_tail > 1 else 1.0
    tails = []
    v = range_mult * B
    for _ in range(half_tail):
        tails.extend([v, -v])
        v *= ratio
    max_viol = mpfr("-inf")
    first_violation = ""
    with workprec(pair.structured.bits):
        for x in xs + tails:
            pm = pair.pminus_at(x)
            pp = pair.pplus_at(x)
            h = mpfr(1) if x >= t else mpfr(0)
            viol_lower = pm - h
            viol_upper = h - pp
            viol = max(viol_lower, viol_upper)
            if viol > max_viol:
                max_viol = viol
                if viol > POINTWISE_SLACK and not first_violation:
                    side = "p_minus > h" if viol_lower >= viol_upper else "p_plus < h"
                    first_violation = f"pointwise {side} at x={float(x):.6g} by {float(viol):.3g}"
    pass_pointwise = max_viol <= POINTWISE_SLACK

    head = normal_sf(t)
    if fast:
        gap = pair.structured.gap_expectation_fubini(bits=192)
        bits_used = pair.structured.bits
        quad_ratio = None
        agreement = None
        fub_ratio = float(gap / head)
    else:
        gap, bits_used = pair.structured.gap_expectation_moment()
        fub = pair.structured.gap_expectation_fubini()
        fub_ratio = float(fub / head)
        quad = quadrature_oracle(
            lambda x: pair.pplus_at(x) - pair.pminus_at(x),
            weight="gaussian", lo=-40, hi=40, rel_tol=1e-15, base_rule=16)
        quad_ratio = float(quad / head)
        agreement = float(abs(quad - gap) / abs(gap)) if gap != 0 else float("inf")
    gap_ratio = float(gap / head)
    pass_gap = gap_ratio <= prm.alpha
    if not pass_gap and not first_violation:
        first_violation = f"gap ratio {gap_ratio:.6g} > alpha {prm.alpha}"
    passed = pass_pointwise and pass_gap
    return VerifyReport(
        t=t, alpha=prm.alpha, m=prm.m, k=prm.k, B=prm.B,
        w=prm.window_width, delta_bump=prm.delta_bump,
        degree=prm.m * prm.k, gap_ratio=gap_ratio,
        max_violation=float(max_viol), pass_pointwise=pass_pointwise,
        pass_gap=pass_gap, passed=passed, gap_expectation=float(gap),
        head_probability=float(head), moment_route_bits=bits_used if not fast else 0,
        quad_gap_ratio=quad_ratio, quad_agreement=agreement,
        fubini_gap_ratio=fub_ratio, grid_size=grid_size,
        first_violation=first_violation,
    )


# ---------------------------------------------------------------------------
# calibration

def _profile_passes(t_grid, alpha_grid, consts, degree_cap) -> tuple:
    for t in t_grid:
        for a in alpha_grid:
            try:
                pair = build_sandwich(t, a, consts, degree_cap=degree_cap,
                                      quick_check=False)
                rep = verify_pair(pair, grid_size=1500, tail_points=60, fast=True)
            except (InfeasibleParameters, DegreeCapExceeded) as e:
                return False, (t, a, f"infeasible: {e}")
            if not rep.passed:
                return False, (t, a, rep.first_violation)
    return True, None


def calibrate_constants(t_grid, alpha_grid,
                        base: SandwichConstants = None,
                        degree_cap: int = DEGREE_CAP_DEFAULT,
                        max_doublings: int = 8,
                        bisection_steps: int = 10) -> SandwichConstants:
    """Deterministic coordinate search for the schedule constants.

    c0 and c1 stay fixed at the profile values; Ccorr, CB, Cm, Ck are
    minimized in that order (doubling to find a passing value, then
    bisection to the smallest passing one), so ties break toward smaller
    Ccorr first, then CB, Cm, Ck.  The verification oracle is verify_pair
    in fast mode on every grid cell.
    """
    if not t_grid or not alpha_grid:
        raise ValueError("grids must be nonempty")
    for a in alpha_grid:
        if not 0 < a < 0.5:
            raise ValueError(f"alpha values must be in (0, 1/2), got {a}")
    consts = base or DEFAULT_CONSTANTS
    ok, detail = _profile_passes(t_grid, alpha_grid, consts, degree_cap)
    if not ok:
        # grow the schedule constants until the profile passes
        grew = consts
        for _ in range(max_doublings):
            grew = replace(grew, Cm=grew.Cm * 2, Ck=grew.Ck * 1.3)
            ok, detail = _profile_passes(t_grid, alpha_grid, grew, degree_cap)
            if ok:
                consts = grew
                break
        if not ok:
            raise CalibrationError(
                f"no passing profile within budget; last failing cell: {detail}")

    def minimize(name: str, consts: SandwichConstants, lo_floor: float) -> SandwichConstants:
        hi = getattr(consts, name)
        lo = lo_floor
        for _ in range(bisection_steps):
            mid = (lo + hi) / 2
            trial = replace(consts, **{name: mid})
            ok, _ = _profile_passes(t_grid, alpha_grid, trial, degree_cap)
            if ok:
                hi = mid
            else:
                lo = mid
        return replace(consts, **{name: hi})

    consts = minimize("Ccorr", consts, 1.0)
    consts = minimize("CB", consts, 0.5)
    consts = minimize("Cm", consts, 1.0)
    consts = minimize("Ck", consts, 0.5)
    ok, detail = _profile_passes(t_grid, alpha_grid, consts, degree_cap)
    if not ok:
        raise CalibrationError(f"calibration lost feasibility: {detail}")
    return consts
