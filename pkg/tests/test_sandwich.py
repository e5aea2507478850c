"""Sandwiching construction at small scale: schedule, bump and step
properties (the paper-claim regions), build/verify structure, reflection,
route agreement, materialization, precision stability, calibration."""
import math

import numpy as np
import pytest

import massart_tester.sandwich as sw
from massart_tester.poly import evaluate, power, chebyshev_over_x
from massart_tester.precision import mpfr, workprec
from massart_tester.quadrature import quadrature_oracle

# light constants: degree ~900 cell, fast enough for unit tests
LIGHT = sw.SandwichConstants(c0=0.5, c1=1.05, Cw=3.2, Ck=3.0, Cm=3.0,
                             CB=1.3, Ccorr=2.0)


@pytest.fixture(scope="module")
def light_pair():
    return sw.build_sandwich(0.3, 0.4, LIGHT, quick_check=False)


def f(x):
    return float(x)


class TestSelectParams:
    def test_k_formula_example(self):
        # Ck = 1, alpha = 1/4: k = 2 ceil(log 4) = 4 (Cm tiny keeps m from
        # forcing the k >= 2 log2(m) floor; Cw/CB sized so the tiny cell
        # stays geometrically valid)
        consts = sw.SandwichConstants(Ck=1.0, Cm=0.04, Cw=0.3, CB=3.0)
        p = sw.select_params(0.0, 0.25, consts)
        assert p.k == 4

    def test_parities(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            t = float(rng.uniform(0, 1.2))
            a = float(rng.uniform(0.05, 0.45))
            p = sw.select_params(t, a, LIGHT, degree_cap=10 ** 9)
            assert p.m % 2 == 1 and p.k % 2 == 0
            assert p.k >= 2 * math.ceil(math.log2(p.m))
            assert p.B == pytest.approx(LIGHT.CB * math.sqrt(p.m * p.k))
            assert p.delta_bump == pytest.approx(LIGHT.c1 * p.B / p.m)

    def test_alpha_monotonicity(self):
        p1 = sw.select_params(1.0, 0.25, LIGHT, degree_cap=10 ** 9)
        p2 = sw.select_params(1.0, 0.1, LIGHT, degree_cap=10 ** 9)
        assert p2.m > p1.m

    def test_degree_cap_error(self):
        with pytest.raises(sw.InfeasibleParameters, match="degree cap"):
            sw.select_params(2.0, 0.05, LIGHT, degree_cap=1000)

    def test_alpha_domain(self):
        with pytest.raises(sw.InfeasibleParameters):
            sw.select_params(0.0, 0.5, LIGHT)
        with pytest.raises(sw.InfeasibleParameters):
            sw.select_params(0.0, 0.75, LIGHT)


class TestBumpF:
    def test_value_at_zero(self):
        for (m, k) in ((5, 4), (9, 6)):
            assert f(evaluate(sw.bump_f(m, k), 0)) == pytest.approx(1.0, abs=1e-100)

    def test_range_on_interval(self):
        p = sw.bump_f(5, 4)
        for x in np.linspace(-1, 1, 1000):
            v = f(evaluate(p, x))
            assert -1e-30 <= v <= 1.0 + 1e-15

    def test_decay_region(self):
        # f <= 2^-k for c1/m <= |x| <= 1 with c1 = 2
        p = sw.bump_f(21, 8)
        for x in np.linspace(2 / 21, 1, 100):
            assert f(evaluate(p, x)) <= 2.0 ** -8 + 1e-18

    def test_concentration_region(self):
        # 1/2 <= f <= 1 for |x| <= c0/(mk) with c0 = 1/2
        m, k = 9, 6
        p = sw.bump_f(m, k)
        for x in np.linspace(-0.5 / (m * k), 0.5 / (m * k), 50):
            assert 0.5 <= f(evaluate(p, x)) <= 1.0

    def test_degree_and_parity_checks(self):
        assert sw.bump_f(5, 4).degree == 16
        with pytest.raises(ValueError):
            sw.bump_f(4, 4)
        with pytest.raises(ValueError):
            sw.bump_f(5, 3)

    def test_matches_public_power_path(self):
        direct = sw.bump_f(5, 4)
        via_ops = power(chebyshev_over_x(5).scale(mpfr(1) / 5), 4)
        for c1, c2 in zip(direct.coeffs, via_ops.coeffs):
            assert abs(f(c1 - c2)) <= 1e-100 * max(1.0, abs(f(c2)))


class TestNormalization:
    def test_vs_quadrature(self):
        p = sw.bump_f(5, 4)
        I = sw.normalization(p)
        q = quadrature_oracle(lambda x: evaluate(p, x), "lebesgue", -1, 1)
        assert abs(f((I - q) / I)) <= 1e-20

    def test_lower_bound(self):
        # I >= c0/(mk) with c0 = 1/2
        I = sw.normalization(sw.bump_f(5, 4))
        assert f(I) >= 0.5 / 20

    def test_upper_bound(self):
        assert f(sw.normalization(sw.bump_f(5, 4))) <= 2.0


class TestStepPoly:
    @pytest.fixture(scope="class")
    def prm(self):
        return sw.select_params(0.3, 0.4, LIGHT)

    @pytest.fixture(scope="class")
    def p(self, prm):
        return sw.step_poly(prm)

    def test_degree(self, prm, p):
        # (m-1)k + 1 is the stated bound; the window difference cancels the
        # top antiderivative term exactly, so the realized degree is (m-1)k
        assert p.degree <= (prm.m - 1) * prm.k + 1
        assert p.degree == (prm.m - 1) * prm.k

    def test_unit_range_inside(self, prm, p):
        B = prm.B
        for x in np.linspace(-B / 2, B / 2, 500):
            v = f(evaluate(p, x))
            assert -1e-12 <= v <= 1 + 1e-12

    def test_left_of_threshold_small(self, prm, p):
        t, D, B = prm.t, prm.delta_bump, prm.B
        bound = 2.0 * 2.0 ** (-prm.k / 4)
        for x in np.linspace(-B / 2 + 1e-6, t - D - 1e-9, 200):
            assert f(evaluate(p, x)) <= bound

    def test_inside_window_close_to_one(self, prm, p):
        t, D, w = prm.t, prm.delta_bump, prm.window_width
        bound = 2.0 * 2.0 ** (-prm.k / 4)
        for x in np.linspace(t + D + 1e-9, t + w - D - 1e-9, 200):
            assert f(evaluate(p, x)) >= 1 - bound

    def test_matches_structured_evaluator(self, prm, p):
        spair = sw.StructuredPair(prm, LIGHT)
        for x in (-3.0, 0.0, 0.31, 2.0, 4.0):
            assert f(evaluate(p, x)) == pytest.approx(
                f(spair.p_of(x)), rel=1e-25, abs=1e-25)


class TestBuildAndVerify:
    def test_degree_bound(self, light_pair):
        prm = light_pair.params
        assert light_pair.degree_bound == prm.m * prm.k
        assert light_pair.p_minus.degree <= prm.m * prm.k
        assert light_pair.p_plus.degree <= prm.m * prm.k

    def test_pointwise_domination_on_grid(self, light_pair):
        rep = sw.verify_pair(light_pair, grid_size=1500, tail_points=60,
                             fast=True)
        assert rep.pass_pointwise
        assert rep.max_violation <= 1e-30

    def test_pair_order_on_samples(self, light_pair):
        B = light_pair.params.B
        for x in np.linspace(-2 * B, 2 * B, 80):
            assert f(light_pair.pplus_at(x) - light_pair.pminus_at(x)) >= 0

    def test_gap_routes_agree(self, light_pair):
        gm, _ = light_pair.structured.gap_expectation_moment()
        gf = light_pair.structured.gap_expectation_fubini()
        assert abs(f((gm - gf) / gm)) <= 1e-18
        q = quadrature_oracle(
            lambda x: light_pair.pplus_at(x) - light_pair.pminus_at(x),
            "gaussian", -40, 40, rel_tol=1e-15, base_rule=16)
        assert abs(f((gm - q) / gm)) <= 1e-12

    def test_reflection_identities(self):
        pos = sw.build_sandwich(0.3, 0.4, LIGHT, quick_check=False)
        neg = sw.build_sandwich(-0.3, 0.4, LIGHT, quick_check=False)
        g1, _ = pos.structured.gap_expectation_moment()
        g2, _ = neg.structured.gap_expectation_moment()
        assert abs(f((g1 - g2) / g1)) <= 1e-20
        # q_-(x) = 1 - p_+(-x), q_+(x) = 1 - p_-(-x), pointwise
        for x in (-2.0, -0.31, -0.29, 0.5, 3.0):
            assert f(neg.pminus_at(x)) == pytest.approx(
                f(1 - pos.pplus_at(-x)), rel=1e-25, abs=1e-25)
            assert f(neg.pplus_at(x)) == pytest.approx(
                f(1 - pos.pminus_at(-x)), rel=1e-25, abs=1e-25)
        rep = sw.verify_pair(neg, grid_size=1200, tail_points=40, fast=True)
        assert rep.pass_pointwise

    def test_materialized_matches_structured(self, light_pair):
        pm, pp = light_pair.p_minus, light_pair.p_plus
        for x in (-3.0, 0.1, 0.29, 0.31, 1.5, 4.0):
            assert f(evaluate(pm, x)) == pytest.approx(
                f(light_pair.pminus_at(x)), rel=1e-20, abs=1e-40)
            assert f(evaluate(pp, x)) == pytest.approx(
                f(light_pair.pplus_at(x)), rel=1e-20, abs=1e-40)

    def test_gap_honest_at_light_degree(self, light_pair):
        # this cheap cell cannot meet the multiplicative bound; the
        # verifier must say so rather than pass it
        rep = sw.verify_pair(light_pair, grid_size=1000, tail_points=40,
                             fast=True)
        assert not rep.pass_gap
        assert rep.gap_ratio > light_pair.params.alpha

    def test_precision_doubling_stability(self):
        p512 = sw.build_sandwich(0.3, 0.4, LIGHT, quick_check=False, bits=512)
        p1024 = sw.build_sandwich(0.3, 0.4, LIGHT, quick_check=False, bits=1024)
        r1 = sw.verify_pair(p512, grid_size=800, tail_points=40, fast=True)
        r2 = sw.verify_pair(p1024, grid_size=800, tail_points=40, fast=True)
        assert r1.pass_pointwise == r2.pass_pointwise
        assert r1.pass_gap == r2.pass_gap
        assert abs(r1.gap_ratio - r2.gap_ratio) <= 1e-10 * abs(r1.gap_ratio)

    def test_build_quick_check_flags_bad_constants(self):
        bad = sw.SandwichConstants(c0=0.5, c1=1.05, Cw=3.2, Ck=3.0, Cm=3.0,
                                   CB=1.3, Ccorr=1.05)
        with pytest.raises(sw.BuildVerificationError, match="pointwise"):
            sw.build_sandwich(0.3, 0.4, bad, quick_check=True)

    def test_window_membership_regions(self, light_pair):
        prm = light_pair.params
        spair = light_pair.structured
        bound = 2.0 * 2.0 ** (-prm.k / 4)
        t, D, w, B = prm.t, prm.delta_bump, prm.window_width, prm.B
        for x in np.linspace(-B / 2 + 1e-6, t - D - 1e-9, 200):
            assert f(spair.p_of(x)) <= bound
        for x in np.linspace(t + D + 1e-9, t + w - D - 1e-9, 200):
            assert 1 - f(spair.p_of(x)) <= bound

    def test_bump_concentration_via_closed_form(self, light_pair):
        prm = light_pair.params
        b = light_pair.structured.bump
        for x in np.linspace(-0.5 / (prm.m * prm.k), 0.5 / (prm.m * prm.k), 50):
            assert 0.5 <= f(b.f_val(mpfr(x))) <= 1.0


class TestCalibration:
    def test_tiny_grid_calibration(self):
        consts = sw.calibrate_constants(
            [0.0], [0.4], base=sw.DEFAULT_CONSTANTS,
            degree_cap=65000, bisection_steps=3)
        ok, detail = sw._profile_passes([0.0], [0.4], consts, 65000)
        assert ok, detail
        # minimization never moves above the passing base
        assert consts.Ccorr <= sw.DEFAULT_CONSTANTS.Ccorr + 1e-9
        assert consts.CB <= sw.DEFAULT_CONSTANTS.CB + 1e-9

    def test_monotone_in_constants(self):
        import dataclasses
        grown = dataclasses.replace(
            sw.DEFAULT_CONSTANTS,
            Cw=sw.DEFAULT_CONSTANTS.Cw * 1.1, Ck=sw.DEFAULT_CONSTANTS.Ck * 1.1,
            Cm=sw.DEFAULT_CONSTANTS.Cm * 1.1, CB=sw.DEFAULT_CONSTANTS.CB * 1.1,
            Ccorr=sw.DEFAULT_CONSTANTS.Ccorr * 1.1)
        ok, detail = sw._profile_passes([0.0], [0.4], grown, 200000)
        assert ok, detail

    def test_off_grid_report_recorded(self):
        # off-grid cells produce a recorded outcome; passing is not promised
        records = {}
        for (t, a) in ((0.25, 0.3), (0.75, 0.3)):
            try:
                pair = sw.build_sandwich(t, a, sw.DEFAULT_CONSTANTS,
                                         degree_cap=65000, quick_check=False)
                rep = sw.verify_pair(pair, grid_size=800, tail_points=40,
                                     fast=True)
                records[(t, a)] = {"feasible": True, "pass": rep.passed}
            except sw.InfeasibleParameters as e:
                records[(t, a)] = {"feasible": False, "error": str(e)}
        assert len(records) == 2

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            sw.calibrate_constants([], [0.4])
        with pytest.raises(ValueError):
            sw.calibrate_constants([0.0], [0.6])


def test_normal_sf_against_quadrature():
    # the erf-based survival function backs the multiplicative guarantee
    for t in (-1.0, 0.0, 0.5, 1.7):
        q = quadrature_oracle(lambda x: mpfr(1), "gaussian", t, 40,
                              rel_tol=1e-30)
        assert abs(f(sw.normal_sf(t) - q)) <= 1e-18
