"""The adaptive quadrature oracle against closed-form integrals."""
import math

import pytest

from massart_tester.poly import Polynomial, antiderivative, chebyshev, evaluate
from massart_tester.precision import mpfr
from massart_tester.quadrature import (QuadratureError, gauss_legendre,
                                       quadrature_oracle)


def f(x):
    return float(x)


def test_gaussian_normalization():
    assert f(quadrature_oracle(lambda x: mpfr(1), "gaussian")) == pytest.approx(
        1.0, abs=1e-24)


def test_gaussian_variance():
    assert f(quadrature_oracle(lambda x: x * x, "gaussian")) == pytest.approx(
        1.0, abs=1e-24)


def test_lebesgue_polynomial_vs_antiderivative():
    p = chebyshev(6)
    P = antiderivative(p)
    lo, hi = -0.8, 1.3
    want = evaluate(P, hi) - evaluate(P, lo)
    got = quadrature_oracle(lambda x: evaluate(p, x), "lebesgue", lo, hi)
    assert abs(f(got - want)) <= 1e-24


def test_sharp_feature_refinement():
    # narrow Gaussian bump integrates to its mass
    s = 0.001
    got = quadrature_oracle(
        lambda x: gmpy_exp(-(x - 0.3) ** 2 / (2 * s ** 2)), "lebesgue", -1, 1,
        rel_tol=1e-20)
    want = s * math.sqrt(2 * math.pi)
    assert f(got) == pytest.approx(want, rel=1e-18)


def gmpy_exp(x):
    import gmpy2
    return gmpy2.exp(x)


def test_weight_validation():
    with pytest.raises(ValueError):
        quadrature_oracle(lambda x: x, "uniform")


def test_nonconvergence_budget():
    import gmpy2
    # |x - pi/7|^0.3 has an algebraic singularity; a tiny panel budget trips
    with pytest.raises(QuadratureError):
        quadrature_oracle(lambda x: abs(x - mpfr(math.pi / 7)) ** mpfr("0.3"),
                          "lebesgue", 0, 1, rel_tol=1e-40, max_panels=12)


def test_gl_rule_integrates_polynomials_exactly():
    nodes, weights = gauss_legendre(12)
    # degree-23 monomial integrated exactly on [-1, 1]
    for deg in (10, 17, 23):
        acc = sum(w * x ** deg for x, w in zip(nodes, weights))
        want = 0.0 if deg % 2 else 2.0 / (deg + 1)
        assert abs(f(acc) - want) <= 1e-100
