"""Adaptive extended-precision quadrature, the independent oracle for all
Gaussian integrals in this package.

Gauss-Kronrod-style: each panel is estimated with an n-point and a 2n-point
Gauss-Legendre rule; the difference drives bisection.  Nodes and weights
are computed at working precision by Newton iteration on P_n and cached.
"""
from __future__ import annotations

import math

import gmpy2

from .precision import get_bits, mpfr, workprec

__all__ = ["quadrature_oracle", "gauss_legendre", "QuadratureError", "gaussian_pdf"]


class QuadratureError(RuntimeError):
    """Adaptive refinement failed to converge within the subdivision budget."""


_GL_CACHE: dict = {}


def _legendre_and_deriv(n: int, x):
    p0, p1 = mpfr(1), x
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp


def gauss_legendre(n: int, bits: int | None = None):
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    bits = bits or get_bits()
    key = (n, bits)
    if key in _GL_CACHE:
        return _GL_CACHE[key]
    with workprec(bits + 32):
        nodes, weights = [], []
        for i in range(1, n // 2 + 1):
            x = mpfr(math.cos(math.pi * (i - 0.25) / (n + 0.5)))
            for _ in range(64):
                p, dp = _legendre_and_deriv(n, x)
                dx = p / dp
                x = x - dx
                if abs(dx) < mpfr(2) ** (-bits - 8):
                    break
            _, dp = _legendre_and_deriv(n, x)
            w = 2 / ((1 - x * x) * dp * dp)
            nodes.append(x)
            weights.append(w)
        full_nodes = [-x for x in nodes] + ([mpfr(0)] if n % 2 else []) + list(reversed(nodes))
        if n % 2:
            _, dp = _legendre_and_deriv(n, mpfr(0))
            w0 = 2 / (dp * dp)
            full_weights = list(weights) + [w0] + list(reversed(weights))
        else:
            full_weights = list(weights) + list(reversed(weights))
    _GL_CACHE[key] = (full_nodes, full_weights)
    return _GL_CACHE[key]


_SQRT_2PI = None
_SQRT_2PI_BITS = 0


def gaussian_pdf(x):
    global _SQRT_2PI, _SQRT_2PI_BITS
    bits = gmpy2.get_context().precision
    if _SQRT_2PI is None or _SQRT_2PI_BITS != bits:
        _SQRT_2PI = gmpy2.sqrt(2 * gmpy2.const_pi())
        _SQRT_2PI_BITS = bits
    return gmpy2.exp(-x * x / 2) / _SQRT_2PI


def _panel(fn, weighted, lo, hi, n):
    nodes, weights = gauss_legendre(n)
    mid = (lo + hi) / 2
    half = (hi - lo) / 2
    acc = mpfr(0)
    for x, w in zip(nodes, weights):
        xx = mid + half * x
        v = fn(xx)
        if weighted:
            v = v * gaussian_pdf(xx)
        acc += w * v
    return acc * half


def quadrature_oracle(fn, weight: str = "gaussian", lo=-40, hi=40,
                      rel_tol=1e-25, abs_tol=1e-80, base_rule: int = 24,
                      max_panels: int = 20000):
    """Integrate fn over [lo, hi], optionally against the N(0,1) density.

    Adaptive bisection until the embedded rule pair agrees to rel_tol
    (or abs_tol for near-zero panels).  Raises QuadratureError if the
    subdivision budget is exhausted.
    """
    if weight not in ("gaussian", "lebesgue"):
        raise ValueError("weight must be 'gaussian' or 'lebesgue'")
    weighted = weight == "gaussian"
    lo, hi = mpfr(lo), mpfr(hi)
    rel_tol = mpfr(rel_tol)
    abs_tol = mpfr(abs_tol)
    stack = [(lo, hi)]
    total = mpfr(0)
    err_budget_hits = 0
    panels_done = 0
    while stack:
        a, b = stack.pop()
        coarse = _panel(fn, weighted, a, b, base_rule)
        fine = _panel(fn, weighted, a, b, 2 * base_rule)
        err = abs(fine - coarse)
        scale = abs(fine)
        panels_done += 1
        if panels_done > max_panels:
            raise QuadratureError(
                f"no convergence after {max_panels} panel refinements")
        if err <= rel_tol * scale or err <= abs_tol:
            total += fine
            continue
        m = (a + b) / 2
        if m <= a or m >= b:
            err_budget_hits += 1
            total += fine
            continue
        stack.append((a, m))
        stack.append((m, b))
    return total
