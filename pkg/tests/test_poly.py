"""Polynomial bases, evaluation, Gaussian integration: spec examples as
oracles plus property tests."""
import math

import gmpy2
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from massart_tester.poly import (
    Polynomial, antiderivative, chebyshev, chebyshev_over_x, compose_affine,
    derivative, enumerate_multi_indices, evaluate, evaluate_float,
    gaussian_expectation, gaussian_moment, hermite_normalized,
    hermite_tensor_eval, mul_int_exact, power, DegreeCapExceeded,
)
from massart_tester.precision import mpfr, set_bits, get_bits, workprec
from massart_tester.quadrature import quadrature_oracle


def f(x):
    return float(x)


class TestChebyshev:
    def test_base_cases(self):
        assert chebyshev(0).coeffs_float() == [1.0]
        assert chebyshev(1).coeffs_float() == [0.0, 1.0]

    def test_t3_by_recurrence(self):
        # two applications of T_{n+1} = 2x T_n - T_{n-1}
        assert chebyshev(3).coeffs_float() == [0.0, -3.0, 0.0, 4.0]

    def test_cosine_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            m = int(rng.integers(1, 26))
            th = float(rng.random() * math.pi)
            assert abs(f(evaluate(chebyshev(m), math.cos(th)))
                       - math.cos(m * th)) <= 1e-12

    def test_bounded_on_interval(self):
        xs = np.linspace(-1, 1, 201)
        for m in (2, 7, 12):
            p = chebyshev(m)
            assert all(abs(f(evaluate(p, x))) <= 1 + 1e-15 for x in xs)

    def test_parity(self):
        for m in range(8):
            p = chebyshev(m)
            for x in (0.3, 1.7):
                assert f(evaluate(p, -x)) == pytest.approx(
                    (-1) ** m * f(evaluate(p, x)), rel=1e-14)

    def test_growth_bound_outside(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            m = int(rng.integers(1, 16))
            x = float(1 + 2 * rng.random())
            assert abs(f(evaluate(chebyshev(m), x))) <= (2 * x) ** m * (1 + 1e-12)


class TestChebyshevOverX:
    def test_m1(self):
        assert chebyshev_over_x(1).coeffs_float() == [1.0]

    def test_m3(self):
        q = chebyshev_over_x(3)
        assert q.coeffs_float() == [-3.0, 0.0, 4.0]
        assert f(evaluate(q, 0)) == -3.0

    def test_derivative_sign_law(self):
        # value at 0 equals T_m'(0) = (-1)^((m-1)/2) m
        for m in range(1, 30, 2):
            assert f(evaluate(chebyshev_over_x(m), 0)) == (-1) ** ((m - 1) // 2) * m

    def test_rejects_even(self):
        with pytest.raises(ValueError):
            chebyshev_over_x(4)


class TestHermite:
    def test_base(self):
        assert hermite_normalized(0).coeffs_float() == [1.0]
        assert hermite_normalized(1).coeffs_float() == [0.0, 1.0]

    def test_he2_at_zero(self):
        assert f(evaluate(hermite_normalized(2), 0)) == pytest.approx(
            -1 / math.sqrt(2), rel=1e-15)

    def test_orthonormality(self):
        hs = [hermite_normalized(i) for i in range(9)]
        for i in range(9):
            for j in range(i, 9):
                e = f(gaussian_expectation(hs[i] * hs[j]))
                assert abs(e - (1.0 if i == j else 0.0)) <= 1e-20


class TestEvaluation:
    def test_constant(self):
        assert f(evaluate(Polynomial([1]), 12.3)) == 1.0

    def test_cheb5_at_half(self):
        # cos(5 * pi/3) = 1/2 by the cosine identity
        assert f(evaluate(chebyshev(5), 0.5)) == pytest.approx(0.5, abs=1e-30)

    def test_square(self):
        assert f(evaluate(Polynomial([0, 0, 1]), 3)) == 9.0

    def test_float_path_close_to_exact(self):
        p = Polynomial([0.25, -1.5, 2.0, 0.125])
        for x in (-1.7, 0.3, 2.2):
            assert evaluate_float(p, x) == pytest.approx(f(evaluate(p, x)), rel=1e-12)


class TestGaussianMoments:
    def test_odd_zero(self):
        assert f(gaussian_moment(1)) == 0.0
        assert f(gaussian_moment(7)) == 0.0

    def test_unit_variance(self):
        assert f(gaussian_moment(2)) == 1.0

    def test_double_factorial(self):
        assert f(gaussian_moment(6)) == 15.0
        assert f(gaussian_moment(10)) == 945.0

    def test_expectation_constant(self):
        assert f(gaussian_expectation(Polynomial([1]))) == 1.0

    def test_expectation_centered_he2(self):
        assert f(gaussian_expectation(Polynomial([-1, 0, 1]))) == 0.0

    def test_expectation_vs_quadrature_cheb4(self):
        p = chebyshev(4)
        e = gaussian_expectation(p)
        q = quadrature_oracle(lambda x: evaluate(p, x), "gaussian")
        assert abs(f((e - q) / e)) <= 1e-20

    def test_expectation_vs_quadrature_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            deg = int(rng.integers(0, 41))
            p = Polynomial(list(rng.uniform(-1, 1, deg + 1)))
            e = gaussian_expectation(p)
            q = quadrature_oracle(lambda x: evaluate(p, x), "gaussian")
            scale = max(1e-30, abs(f(e)))
            assert abs(f(e - q)) / scale <= 1e-15


class TestCalculusOps:
    def test_compose_affine_linear(self):
        q = compose_affine(Polynomial([0, 1]), 2, 1)
        assert q.coeffs_float() == [1.0, 2.0]

    def test_compose_affine_identity(self):
        q = compose_affine(Polynomial([0, 0, 1]), 1, 0)
        assert q.coeffs_float() == [0.0, 0.0, 1.0]

    def test_compose_affine_root_shift(self):
        t = 1.37
        q = compose_affine(Polynomial([0, 0, 1]), 1, -t)
        assert f(evaluate(q, t)) == pytest.approx(0.0, abs=1e-30)

    def test_antiderivative_basics(self):
        assert antiderivative(Polynomial([1])).coeffs_float() == [0.0, 1.0]
        assert antiderivative(Polynomial([0, 0, 3])).coeffs_float() == [0.0, 0.0, 0.0, 1.0]

    def test_antiderivative_cheb_over_x(self):
        P = antiderivative(chebyshev_over_x(3))
        assert P.coeffs_float() == [0.0, -3.0, 0.0, pytest.approx(4 / 3)]

    def test_affine_antiderivative_roundtrip(self):
        # d/dx[P(ax+b)] = a p(ax+b), verified as a coefficient identity
        rng = np.random.default_rng(4)
        p = Polynomial(list(rng.uniform(-2, 2, 9)))
        a, b = 1.7, -0.4
        lhs = derivative(compose_affine(antiderivative(p), a, b))
        rhs = compose_affine(p, a, b).scale(a)
        for c1, c2 in zip(lhs.coeffs, rhs.coeffs):
            assert abs(f(c1 - c2)) <= 1e-12 * max(1.0, abs(f(c2)))

    def test_power_basics(self):
        assert power(Polynomial([0, 1]), 3).coeffs_float() == [0, 0, 0, 1]
        assert power(Polynomial([1, 1]), 2).coeffs_float() == [1.0, 2.0, 1.0]

    def test_power_degree_cap(self):
        with pytest.raises(DegreeCapExceeded):
            power(Polynomial([0, 1]), 100, degree_cap=50)


class TestMultiIndices:
    def test_examples(self):
        assert enumerate_multi_indices(2, 1) == [(0, 0), (1, 0), (0, 1)]
        assert enumerate_multi_indices(1, 3) == [(0,), (1,), (2,), (3,)]

    def test_count(self):
        assert len(enumerate_multi_indices(2, 2)) == 6   # C(4, 2)
        assert len(enumerate_multi_indices(3, 3)) == 20  # C(6, 3)

    def test_dim_cap(self):
        with pytest.raises(ValueError):
            enumerate_multi_indices(10, 10, dim_cap=100)

    def test_graded_totals(self):
        idx = enumerate_multi_indices(3, 4)
        totals = [sum(a) for a in idx]
        assert totals == sorted(totals)


class TestHermiteTensor:
    def test_constant(self):
        assert hermite_tensor_eval((0, 0), (3.1, -2.2)) == 1.0

    def test_first_degree(self):
        assert hermite_tensor_eval((1, 0), (2.0, 5.0)) == 2.0

    def test_mixed(self):
        assert hermite_tensor_eval((2, 1), (0.0, 1.0)) == pytest.approx(
            -1 / math.sqrt(2), rel=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            hermite_tensor_eval((1, 2), (0.0,))


class TestExactIntegerMultiply:
    def test_against_numpy(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            la, lb = int(rng.integers(1, 120)), int(rng.integers(1, 120))
            a = rng.integers(-10 ** 6, 10 ** 6, la).tolist()
            b = rng.integers(-10 ** 6, 10 ** 6, lb).tolist()
            got = [int(x) for x in mul_int_exact(a, b)]
            want = [int(round(v)) for v in np.polynomial.polynomial.polymul(a, b)]
            assert got == want


@given(st.integers(1, 12), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_power_degree_law(deg, k):
    rng = np.random.default_rng(deg * 17 + k)
    coeffs = list(rng.uniform(-1, 1, deg)) + [1.0]
    p = Polynomial(coeffs)
    assert power(p, k).degree == k * p.degree


@given(st.integers(0, 10))
@settings(max_examples=11, deadline=None)
def test_hermite_leading_positive(k):
    p = hermite_normalized(k)
    assert p.degree == k
    assert f(p.coeffs[-1]) > 0


def test_sine_bound():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        m = int(rng.integers(1, 40))
        th = float((rng.random() - 0.5) * 20)
        assert abs(math.sin(m * th)) <= m * abs(math.sin(th)) + 1e-12


def test_precision_context_roundtrip():
    assert get_bits() == 512
    with workprec(1024):
        x = gmpy2.sqrt(mpfr(2))
        assert x.precision == 1024
    with pytest.raises(ValueError):
        set_bits(64)
