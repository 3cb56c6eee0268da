"""Mixture densities, dual-path agreement, pattern densities, tail constants."""

import math

import numpy as np
import pytest
from scipy import integrate

from fiberbundle import threshold as th
from fiberbundle.cascade import StructureFunction, enumerate_patterns, parse_pattern, \
    sample_bundle_strengths
from fiberbundle.distributions import unit_exponential
from fiberbundle.loadshare import EqualRule, UnitRule


class TestIrwinHall:
    @pytest.mark.parametrize("m,t,expected", [
        (1, 0.5, 1.0),
        (2, 1.0, 1.0),
        (3, 1.5, 0.75),
        (2, 0.25, 0.25),
    ])
    def test_known_values(self, m, t, expected):
        assert th.irwin_hall_pdf(m, t) == pytest.approx(expected)

    def test_outside_support_is_zero(self):
        assert th.irwin_hall_pdf(2, -0.3) == 0.0
        assert th.irwin_hall_pdf(2, 2.0001) == 0.0

    def test_m_zero_symbolic(self):
        with pytest.raises(ValueError, match="point mass"):
            th.irwin_hall_pdf(0, 0.0)

    @pytest.mark.parametrize("m", [1, 2, 3, 5, 8, 12, 30])
    def test_normalizes_to_one(self, m):
        knots = list(range(1, m))
        val = th._integrate_panels(lambda t: th.irwin_hall_pdf(m, t), 0.0, float(m), knots)
        assert val == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("m", [2, 3, 6])
    def test_self_convolution(self, m):
        # b_m(t) = integral of b_{m-1}(t-u) du over [0, 1]
        for t in (0.4, 1.3, m / 2, m - 0.7):
            direct = th.irwin_hall_pdf(m, t)
            if m - 1 == 0:
                conv = 1.0 if 0 <= t <= 1 else 0.0
            else:
                conv, _ = integrate.quad(
                    lambda u: th.irwin_hall_pdf(m - 1, t - u), 0, 1,
                    points=[t - k for k in range(m)], limit=100,
                )
            assert direct == pytest.approx(conv, abs=1e-9)

    def test_deep_shape_stays_stable(self):
        # near the mode, b_m is within the CLT kurtosis correction (~0.5% at
        # m = 30) of the normal density with variance m/12
        m = 30
        approx = 1.0 / math.sqrt(2 * math.pi * m / 12.0)
        assert th.irwin_hall_pdf(m, m / 2) == pytest.approx(approx, rel=1e-2)


class TestMixingDensity:
    def test_minimum_case_is_atom(self):
        mix = th.order_stat_mixing(1, 7)
        assert mix.is_atom and mix.support == (7.0, 7.0)
        with pytest.raises(ValueError, match="point mass"):
            th.order_stat_mixing_density(1, 7, 7.0)

    def test_k2_n5_closed_form(self):
        # density proportional to 1/theta^2 on [4, 5]; normalizer 20
        mix = th.order_stat_mixing(2, 5)
        assert 1.0 / mix.normalizer == pytest.approx(20.0, abs=1e-8)
        assert th.order_stat_mixing_density(2, 5, 4.5) == pytest.approx(20 / 4.5**2)
        assert th.order_stat_mixing_density(2, 5, 3.99) == 0.0

    @pytest.mark.parametrize("k,n", [(2, 4), (3, 6), (4, 8)])
    def test_integrates_to_one(self, k, n):
        mix = th.order_stat_mixing(k, n)
        lo, hi = mix.support
        val = th._integrate_panels(mix.pdf, lo, hi, [lo + j for j in range(1, k)])
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_nonnegative_everywhere(self):
        mix = th.order_stat_mixing(3, 6)
        grid = np.linspace(3.5, 6.5, 200)
        assert np.all(mix.pdf(grid) >= 0.0)


class TestOrderStatJoint:
    def test_n2_closed_form(self):
        joint = th.OrderStatJointDensity(1, 2, 2)
        for x, y in [(0.5, 1.0), (0.2, 2.0)]:
            assert joint.direct(x, y) == pytest.approx(2 * math.exp(-x - y))
            assert joint.mixture(x, y) == pytest.approx(2 * math.exp(-x - y), rel=1e-8)

    @pytest.mark.parametrize("k,l,n", [(1, 2, 3), (2, 4, 6), (3, 5, 8)])
    def test_paths_agree_on_lattice(self, k, l, n):
        joint = th.OrderStatJointDensity(k, l, n)
        for x in np.linspace(0.2, 1.0, 5):
            for dy in np.linspace(0.2, 1.0, 5):
                a = joint.direct(x, x + dy)
                b = joint.mixture(x, x + dy)
                assert abs(a - b) / a < 1e-6

    def test_paths_agree_for_all_small_orders(self):
        # every (k, l, n) with n <= 8, reduced lattice
        for n in range(2, 9):
            for k in range(1, n):
                for l in range(k + 1, n + 1):
                    joint = th.OrderStatJointDensity(k, l, n)
                    for x in (0.3, 0.9):
                        for dy in (0.4, 1.1):
                            a = joint.direct(x, x + dy)
                            b = joint.mixture(x, x + dy)
                            assert abs(a - b) / a < 1e-6, (k, l, n, x, dy)

    def test_marginal_recovered_by_quadrature(self):
        joint = th.OrderStatJointDensity(2, 4, 6)
        for x in (0.3, 0.8):
            val, _ = integrate.quad(lambda y: joint.direct(x, y), x, np.inf,
                                    epsabs=1e-12, limit=200)
            assert val == pytest.approx(joint.marginal_k(x), abs=1e-5)

    def test_direct_normalizes(self):
        joint = th.OrderStatJointDensity(2, 3, 4)
        val, _ = integrate.dblquad(
            lambda y, x: joint.direct(x, y), 0, 30, lambda x: x, 30, epsabs=1e-10,
        )
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_ordering_enforced(self):
        joint = th.OrderStatJointDensity(2, 4, 6)
        assert joint.direct(1.0, 0.5) == 0.0
        assert joint.mixture(1.0, 1.0) == 0.0
        with pytest.raises(ValueError):
            th.OrderStatJointDensity(3, 3, 6)


class TestTilted:
    def test_factors_normalize(self):
        tc = th.TiltedConditional(2, 4, 6, 0.5, 1.0)
        v1, _ = integrate.quad(tc.factor1, 5, 6)
        v2, _ = integrate.quad(tc.factor2, 3, 4)
        assert v1 == pytest.approx(1.0, abs=1e-8)
        assert v2 == pytest.approx(1.0, abs=1e-8)

    def test_joint_factorizes_exactly(self):
        tc = th.TiltedConditional(2, 4, 6, 0.5, 1.0)
        assert tc.pdf(5.3, 3.7) == float(tc.factor1(5.3)) * float(tc.factor2(3.7))

    def test_vanishing_tilt_recovers_shifted_convolution(self):
        k, l, n = 3, 6, 8
        tc = th.TiltedConditional(k, l, n, 1e-12, 1.0 + 1e-12)
        shift = n - k + 1
        for theta in (6.3, 7.0, 7.9):
            assert float(tc.factor1(theta)) == pytest.approx(
                th.irwin_hall_pdf(k - 1, theta - shift), rel=1e-6
            )

    def test_unsupported_theta_is_zero(self):
        tc = th.TiltedConditional(2, 4, 6, 0.5, 1.0)
        assert tc.pdf(4.5, 3.5) == 0.0

    def test_degenerate_cases_rejected(self):
        with pytest.raises(ValueError, match="point mass"):
            th.TiltedConditional(1, 3, 5, 0.5, 1.0)
        with pytest.raises(ValueError, match="point mass"):
            th.TiltedConditional(2, 3, 5, 0.5, 1.0)


class TestPatternDensity:
    def test_two_component_hand_values(self):
        er = EqualRule(2)
        ue = unit_exponential()
        inp = th.pattern_density_input(parse_pattern("1(2)"), er, 2, ue, [0.3])
        expected = (math.exp(-0.3) - math.exp(-0.6)) * math.exp(-0.3)
        assert th.phase1_pattern_density(inp) == pytest.approx(expected)
        inp2 = th.pattern_density_input(parse_pattern("1 2"), er, 2, ue, [0.3, 0.5])
        assert th.phase1_pattern_density(inp2) == pytest.approx(
            math.exp(-0.3) * 2 * math.exp(-1.0)
        )

    def test_single_cycle_reduces_to_phase1_factor(self):
        # empty burst: density is a * f(a s) alone
        inp = th.pattern_density_input(parse_pattern("1"), EqualRule(1), 1,
                                       unit_exponential(), [0.7])
        assert th.phase1_pattern_density(inp) == pytest.approx(math.exp(-0.7))

    def test_decreasing_stresses_rejected(self):
        inp = th.pattern_density_input(parse_pattern("1 2"), EqualRule(2), 2,
                                       unit_exponential(), [0.5, 0.3])
        with pytest.raises(ValueError, match="increasing"):
            th.phase1_pattern_density(inp)

    def test_two_component_probabilities(self):
        er = EqualRule(2)
        ue = unit_exponential()
        assert th.pattern_probability(parse_pattern("1 2"), er, 2, ue) == pytest.approx(1 / 3, abs=1e-8)
        assert th.pattern_probability(parse_pattern("1(2)"), er, 2, ue) == pytest.approx(1 / 6, abs=1e-8)

    def test_total_probability_n3(self):
        er = EqualRule(3)
        ue = unit_exponential()
        total = sum(
            th.pattern_probability(p, er, 3, ue, epsabs=1e-8, epsrel=1e-7)
            for p in enumerate_patterns(3)
        )
        assert total == pytest.approx(1.0, abs=1e-3)


class TestLowerTailConstant:
    def test_single_exponential_k_is_one(self):
        xs = np.random.default_rng(0).standard_exponential(300_000)
        k = th.lower_tail_constant(1, samples=xs, window=(1e-4, 1e-2))
        assert k == pytest.approx(1.0, rel=0.05)

    def test_minimum_of_three_exponentials(self):
        xs = np.random.default_rng(1).standard_exponential((300_000, 3)).min(axis=1)
        k = th.lower_tail_constant(1, samples=xs, window=(1e-4, 1e-2))
        assert k == pytest.approx(3.0, rel=0.05)

    def test_mixing_moment_path(self):
        # strength of the max of n exponentials mixes over a_{n;n}: K = 1
        for n in (2, 3, 4):
            k = th.lower_tail_constant(n, mixing=th.order_stat_mixing(n, n))
            assert k == pytest.approx(1.0, abs=1e-8)

    def test_atom_moment_path(self):
        # minimum of n exponentials: point-mass mixing at n gives K = n
        assert th.lower_tail_constant(1, mixing=th.order_stat_mixing(1, 5)) == pytest.approx(5.0)

    def test_requires_enough_points(self):
        with pytest.raises(ValueError, match="replica"):
            th.lower_tail_constant(1, samples=np.arange(1, 500.0))

    def test_exactly_one_source(self):
        with pytest.raises(ValueError):
            th.lower_tail_constant(1)
        with pytest.raises(ValueError):
            th.lower_tail_constant(1, samples=[1.0], mixing=th.order_stat_mixing(2, 2))


class TestParallelTailConstant:
    def test_no_sharing_gives_one(self):
        for n in (1, 2, 3):
            assert th.parallel_exponential_tail_constant(UnitRule(n), n) == pytest.approx(1.0)

    def test_equal_rule_two_components(self):
        # F(x) = (1-e^{-2x})^2 - (e^{-x}-e^{-2x})^2 = 3x^2 + O(x^3)
        assert th.parallel_exponential_tail_constant(EqualRule(2), 2) == pytest.approx(3.0)

    def test_equal_rule_three_components(self):
        # hand integral of 6 vol{y1<y2<y3, y1<=x, y2<=1.5x, y3<=3x} = 12.25 x^3
        assert th.parallel_exponential_tail_constant(EqualRule(3), 3) == pytest.approx(12.25)

    def test_dual_path_equal_rule_bundle(self):
        samples = sample_bundle_strengths(
            unit_exponential(), EqualRule(2), StructureFunction.parallel(2),
            1_000_000, seed=23,
        )
        k_reg = th.lower_tail_constant(2, samples=samples)
        k_quad = th.parallel_exponential_tail_constant(EqualRule(2), 2)
        assert abs(k_reg - k_quad) / k_quad < 0.10

    def test_tail_ratio_converges_toward_constant(self):
        samples = sample_bundle_strengths(
            unit_exponential(), EqualRule(2), StructureFunction.parallel(2),
            4_000_000, seed=29,
        )
        xs = np.sort(samples)
        k_quad = 3.0
        ratios = [np.searchsorted(xs, x) / xs.size / x**2 for x in (0.05, 0.02, 0.01)]
        assert ratios[0] < ratios[1]
        assert abs(ratios[-1] - k_quad) < abs(ratios[0] - k_quad)
