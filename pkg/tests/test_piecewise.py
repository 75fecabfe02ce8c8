import math

import numpy as np
import pytest

from conftest import make_case3, segmented_trapezoid
from sdeldp import (ConsistencyError, ModifiedPair, NonElliptic,
                    PiecewiseFunction, RatioNotPiecewiseConstant, SdeModel,
                    Segment, UnboundedGrowth, hat_coefficients, modify,
                    s_transform, side_limits, sigma_transform,
                    tilde_decomposition, validate_bounds)

SIGN_DOWN = PiecewiseFunction.step([0.0], [1.0, -1.0])  # +1 below 0, -1 above
ONE = PiecewiseFunction.constant(1.0)


def oracle_S(pair, x, step=1e-4):
    f_l = lambda t: pair.a_bar.left_limit(float(t[0])) / pair.sigma_bar.left_limit(float(t[0])) ** 2 * np.ones(1)
    f_r = lambda t: np.asarray(pair.a_bar(t)) / np.asarray(pair.sigma_bar(t)) ** 2
    return segmented_trapezoid(f_l, f_r, pair.breakpoints, x, step)


def oracle_Sigma(pair, x, step=1e-4):
    f_l = lambda t: 1.0 / pair.sigma_bar.left_limit(float(t[0])) * np.ones(1)
    f_r = lambda t: 1.0 / np.asarray(pair.sigma_bar(t))
    return segmented_trapezoid(f_l, f_r, pair.breakpoints, x, step)


class TestSideLimits:
    def test_constant(self):
        f = PiecewiseFunction.constant(3.0)
        assert side_limits(f, 0.0) == (3.0, 3.0)

    def test_sign_jump(self):
        assert side_limits(SIGN_DOWN, 0.0) == (1.0, -1.0)

    def test_affine_segment(self):
        f = PiecewiseFunction([0.0, 1.0],
                              [Segment("constant", 0.0), Segment("affine", 0.0, 2.0),
                               Segment("constant", 5.0)], clamp_radius=3.0)
        left, right = side_limits(f, 1.0)
        assert left == 2.0
        assert right == 5.0

    def test_noncrossing_point_equal(self):
        left, right = side_limits(SIGN_DOWN, 0.7)
        assert left == right == -1.0


class TestEvaluation:
    def test_at_breakpoint_defaults_to_right_limit(self):
        assert SIGN_DOWN(0.0) == -1.0

    def test_explicit_at_value(self):
        f = PiecewiseFunction.step([0.0], [1.0, -1.0], at_breakpoints=[0.25])
        assert f(0.0) == 0.25
        assert f(np.array([-1.0, 0.0, 1.0])).tolist() == [1.0, 0.25, -1.0]

    def test_clamp_freezes_affine_tails(self):
        f = PiecewiseFunction([], [Segment("affine", 0.0, 2.0)], clamp_radius=3.0)
        assert f(10.0) == 6.0
        assert f(-10.0) == -6.0

    def test_strictly_increasing_breakpoints_required(self):
        with pytest.raises(ValueError):
            PiecewiseFunction.step([1.0, 1.0], [0.0, 1.0, 2.0])


class TestValidateBounds:
    def test_trivial_model(self):
        C, c = validate_bounds(PiecewiseFunction.constant(0.0), ONE)
        assert C >= 1.0 and c == 1.0

    def test_sigma_touching_zero_rejected(self):
        bad = PiecewiseFunction.step([0.0], [1.0, 0.0])
        with pytest.raises(NonElliptic):
            validate_bounds(PiecewiseFunction.constant(0.0), bad)

    def test_sigma_root_inside_affine_segment_rejected(self):
        bad = PiecewiseFunction([], [Segment("affine", 1.0, 1.0)], clamp_radius=3.0)
        with pytest.raises(NonElliptic):
            validate_bounds(PiecewiseFunction.constant(0.0), bad)

    def test_sign_drift_constant_one(self):
        C, c = validate_bounds(SIGN_DOWN, ONE)
        assert C == 1.0 and c == 1.0

    def test_affine_without_clamp_rejected(self):
        runaway = PiecewiseFunction([], [Segment("affine", 0.0, 1.0)])
        with pytest.raises(UnboundedGrowth):
            validate_bounds(runaway, ONE)


class TestModify:
    def test_identity_at_continuity_points(self):
        pair = modify(SIGN_DOWN, ONE)
        for x in (-1.3, -0.2, 0.4, 2.0):
            assert pair.a_bar(x) == SIGN_DOWN(x)
            assert pair.sigma_bar(x) == 1.0

    def test_inward_field_zeroes_drift(self):
        pair = modify(SIGN_DOWN, ONE)
        assert pair.a_bar(0.0) == 0.0
        assert pair.sigma_bar(0.0) == 1.0
        assert pair.provenance[0].rule == "zero-drift"

    def test_min_ratio_picks_smaller_side(self):
        a = PiecewiseFunction.step([0.0], [2.0, 1.0])
        s = PiecewiseFunction.step([0.0], [1.0, 2.0])
        pair = modify(a, s)  # ratios 4 vs 1/4
        assert pair.a_bar(0.0) == 1.0
        assert pair.sigma_bar(0.0) == 2.0
        assert pair.provenance[0].rule == "min-ratio"
        assert pair.provenance[0].side == "right"

    def test_tie_breaks_right(self):
        a = PiecewiseFunction.step([0.0], [1.0, -1.0], at_breakpoints=[5.0])
        s = PiecewiseFunction.step([0.0], [2.0, 2.0])
        pair = modify(PiecewiseFunction.step([0.0], [1.0, 1.0]), s)
        assert pair.provenance[0].tie
        assert pair.provenance[0].side == "right"

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, s = make_case3(rng)
            pair = modify(a, s)
            again = modify(pair.a_bar, pair.sigma_bar)
            xs = np.linspace(-2.0, 2.0, 401)
            xs = np.concatenate([xs, np.asarray(pair.breakpoints)])
            assert np.array_equal(again.a_bar(xs), pair.a_bar(xs))
            assert np.array_equal(again.sigma_bar(xs), pair.sigma_bar(xs))

    def test_sigma_bar_inherits_ellipticity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a, s = make_case3(rng)
            C, c = validate_bounds(a, s)
            pair = modify(a, s)
            xs = np.concatenate([np.linspace(-2, 2, 301), np.asarray(pair.breakpoints)])
            s2 = np.asarray(pair.sigma_bar(xs)) ** 2
            assert np.all(s2 >= c - 1e-15)
            assert np.all(s2 <= C + 1e-15)

    def test_b_bar_lower_semicontinuous(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            a, s = make_case3(rng)
            pair = modify(a, s)
            for z in pair.breakpoints:
                bl, br = pair.b_bar_limits(z)
                al, ar = side_limits(a, z)
                if al >= 0.0 >= ar:
                    assert pair.b_bar(z) == 0.0
                else:
                    assert pair.b_bar(z) == min(bl, br)


class TestTransforms:
    def test_zero_drift_gives_zero_S(self):
        pair = modify(PiecewiseFunction.constant(0.0), ONE)
        assert s_transform(pair, 3.7) == 0.0

    def test_constant_integrand(self):
        pair = modify(PiecewiseFunction.constant(2.0), ONE)
        assert s_transform(pair, 3.0) == pytest.approx(6.0, abs=1e-12)

    def test_sign_drift_S_is_minus_abs(self):
        pair = modify(PiecewiseFunction.step([0.0], [-1.0, -1.0]), ONE)
        pair = modify(PiecewiseFunction([0.0],
                                        [Segment("constant", 1.0), Segment("constant", -1.0)]), ONE)
        # S(x) = -|x|: frozen from the quadrature oracle
        for x in (2.0, -2.0):
            got = s_transform(pair, x)
            assert got == pytest.approx(-2.0, abs=1e-9)
            assert got == pytest.approx(oracle_S(pair, x), abs=1e-6)

    def test_sigma_transform_identity(self):
        pair = modify(PiecewiseFunction.constant(0.0), ONE)
        assert sigma_transform(pair, 1.7) == pytest.approx(1.7, abs=1e-12)

    def test_sigma_transform_halves(self):
        pair = modify(PiecewiseFunction.constant(0.0), PiecewiseFunction.constant(2.0))
        assert sigma_transform(pair, 4.0) == pytest.approx(2.0, abs=1e-12)

    def test_sigma_transform_split(self):
        pair = modify(PiecewiseFunction.constant(0.0),
                      PiecewiseFunction.step([0.0], [1.0, 2.0]))
        got = sigma_transform(pair, 2.0)
        assert got == pytest.approx(1.0, abs=1e-9)
        assert got == pytest.approx(oracle_Sigma(pair, 2.0), abs=1e-6)

    def test_additivity(self):
        rng = np.random.default_rng(10)
        a, s = make_case3(rng)
        pair = modify(a, s)
        x, y = 1.3, -0.7
        assert s_transform(pair, x) - s_transform(pair, y) == pytest.approx(
            oracle_S(pair, x) - oracle_S(pair, y), abs=2e-6)

    def test_oracle_on_random_models(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            a, s = make_case3(rng)
            pair = modify(a, s)
            for x in rng.uniform(-2.0, 2.0, 3):
                assert s_transform(pair, x) == pytest.approx(oracle_S(pair, x), abs=1e-6)
                assert sigma_transform(pair, x) == pytest.approx(oracle_Sigma(pair, x), abs=1e-6)

    def test_oracle_with_affine_sigma(self):
        a = PiecewiseFunction.step([0.0], [0.8, -0.4], clamp_radius=3.0)
        s = PiecewiseFunction([0.0], [Segment("affine", 1.0, -0.1), Segment("affine", 1.5, 0.2)],
                              clamp_radius=3.0)
        pair = modify(a, s)
        for x in (-2.5, -0.9, 1.4, 2.8):
            assert s_transform(pair, x) == pytest.approx(oracle_S(pair, x), abs=1e-6)
            assert sigma_transform(pair, x) == pytest.approx(oracle_Sigma(pair, x), abs=1e-6)

    def test_sigma_transform_monotone_lipschitz(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            a, s = make_case3(rng)
            C, c = validate_bounds(a, s)
            pair = modify(a, s)
            xs = np.linspace(-2.5, 2.5, 501)
            vals = sigma_transform(pair, xs)
            steps = np.diff(vals)
            assert np.all(steps > 0)
            assert np.max(steps) <= (xs[1] - xs[0]) / math.sqrt(c) * (1 + 1e-12)


class TestTildeDecomposition:
    def test_continuous_sigma_trivial(self):
        a = PiecewiseFunction.step([0.0], [1.0, -1.0])
        a_t, s_t, ups = tilde_decomposition(a, ONE)
        xs = np.linspace(-2, 2, 101)
        assert np.allclose(ups(xs), 1.0)
        assert np.array_equal(a_t(xs), a(xs))
        assert np.allclose(s_t(xs), 1.0)

    def test_single_jump_factor(self):
        a = PiecewiseFunction.step([0.0], [1.0, 1.0])
        s = PiecewiseFunction.step([0.0], [1.0, 2.0])
        a_t, s_t, ups = tilde_decomposition(a, s)
        assert s_t(-1.0) == 1.0
        assert s_t(0.0) == 2.0
        assert s_t(1.0) == 2.0

    def test_two_jumps_cancel(self):
        a = PiecewiseFunction.step([-0.5, 0.5], [1.0, 1.0, 1.0])
        s = PiecewiseFunction.step([-0.5, 0.5], [1.0, 2.0, 1.0])
        a_t, s_t, ups = tilde_decomposition(a, s)
        assert s_t(-1.0) == 1.0
        assert s_t(0.0) == 2.0
        assert s_t(2.0) == pytest.approx(1.0, abs=1e-15)

    def test_identities(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            a, s = make_case3(rng)
            a_t, s_t, ups = tilde_decomposition(a, s)
            xs = np.linspace(-2.2, 2.2, 301)
            assert np.allclose(s_t(xs), np.asarray(s(xs)) * np.asarray(ups(xs)), rtol=1e-12)
            mask = np.abs(np.asarray(a(xs))) > 1e-12
            ratio = np.asarray(a_t(xs)) / np.asarray(s_t(xs)) ** 2
            ratio0 = np.asarray(a(xs)) / np.asarray(s(xs)) ** 2
            assert np.allclose(ratio[mask], ratio0[mask], rtol=1e-9)
            # tilde pair constant per interval
            for seg in a_t.segments + s_t.segments:
                assert seg.c1 == 0.0

    def test_upsilon_continuous_at_ratio_jumps(self):
        rng = np.random.default_rng(14)
        for _ in range(25):
            a, s = make_case3(rng)
            a_t, s_t, ups = tilde_decomposition(a, s)
            ratio_jumps = [z for z in s_t.breakpoints
                           if s_t.left_limit(z) != s_t.right_limit(z)]
            for z in ratio_jumps:
                l, r = side_limits(ups, z)
                assert l == pytest.approx(r, rel=1e-12)

    def test_affine_drift_rejected(self):
        a = PiecewiseFunction([], [Segment("affine", 0.0, 1.0)], clamp_radius=2.0)
        with pytest.raises(RatioNotPiecewiseConstant):
            tilde_decomposition(a, ONE)


class TestHatCoefficients:
    def test_unit_multiplier_is_identity(self):
        pair = modify(SIGN_DOWN, ONE)
        a_hat, s_hat = hat_coefficients(pair, PiecewiseFunction.constant(1.0))
        xs = np.concatenate([np.linspace(-2, 2, 101), [0.0]])
        assert np.array_equal(a_hat(xs), pair.a_bar(xs))
        assert np.array_equal(s_hat(xs), pair.sigma_bar(xs))

    def test_constant_multiplier_formula(self):
        pair = modify(PiecewiseFunction.constant(1.0), ONE)
        a_hat, s_hat = hat_coefficients(pair, PiecewiseFunction.constant(2.0))
        assert a_hat(0.3) == 4.0
        assert s_hat(0.3) == 2.0

    def test_matches_direct_modification(self):
        rng = np.random.default_rng(15)
        for _ in range(25):
            a, s = make_case3(rng)
            pair = modify(a, s)
            tilde = tilde_decomposition(a, s)
            a_hat, s_hat = hat_coefficients(pair, tilde[2], tilde=tilde)
            direct = modify(tilde[0], tilde[1])
            xs = np.concatenate([np.linspace(-2.2, 2.2, 201), np.asarray(a_hat.breakpoints)])
            assert np.allclose(a_hat(xs), direct.a_bar(xs), atol=1e-12)
            assert np.allclose(s_hat(xs), direct.sigma_bar(xs), atol=1e-12)

    def test_squared_ratio_side_identity(self):
        # derived from the one-sided limits: the hat ratio at a breakpoint is
        # the bar ratio scaled by the larger side of the multiplier squared
        rng = np.random.default_rng(16)
        for _ in range(25):
            a, s = make_case3(rng)
            pair = modify(a, s)
            a_t, s_t, ups = tilde_decomposition(a, s)
            a_hat, s_hat = hat_coefficients(pair, ups)
            hat = ModifiedPair(a_hat, s_hat)
            for z in a_hat.breakpoints:
                ul, ur = side_limits(ups, z)
                expect = pair.b_bar(z) * max(ul * ul, ur * ur)
                assert hat.b_bar(z) == pytest.approx(expect, rel=1e-10, abs=1e-12)

    def test_consistency_check_fires_on_wrong_tilde(self):
        a, s = make_case3(np.random.default_rng(17))
        pair = modify(a, s)
        a_t, s_t, ups = tilde_decomposition(a, s)
        wrong = (PiecewiseFunction.constant(123.0), s_t)
        with pytest.raises(ConsistencyError):
            hat_coefficients(pair, ups, tilde=wrong)


class TestSdeModel:
    def test_build_certifies_bounds(self):
        model = SdeModel.build(SIGN_DOWN, ONE, 0.0, 1.0)
        assert model.bounds == (1.0, 1.0)

    def test_nonpositive_horizon_rejected(self):
        with pytest.raises(ValueError):
            SdeModel.build(SIGN_DOWN, ONE, 0.0, 0.0)
