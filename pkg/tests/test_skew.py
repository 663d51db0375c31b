import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from askewsgd import (ConstraintParams, QuadraticToyModel, QuantGrid,
                      active_set, kkt_residual, qp_oracle, skew_direction,
                      slack_vectors)

BINARY2 = QuantGrid.binary(2)
P03 = ConstraintParams(epsilon=0.3, alpha=1.0, m_clip=1.0)


class TestActiveSet:
    def test_grid_points_inactive(self):
        assert active_set(P03, BINARY2, np.array([1.0, -1.0])).size == 0

    def test_single_active(self):
        assert active_set(P03, BINARY2, np.array([0.5, 1.0])).tolist() == [0]

    def test_all_active(self):
        assert active_set(P03, BINARY2, np.array([0.0, 0.0])).tolist() == [0, 1]


class TestSkewDirection:
    def test_inactive_is_negative_gradient(self):
        u = np.array([0.7, -2.0])
        step = skew_direction(P03, BINARY2, u, np.array([1.0, -1.0]))
        assert np.array_equal(step.v, -u)
        assert step.active.size == 0
        assert np.all(step.lambdas == 0.0)

    def test_hand_example_pullback(self):
        # slack(0.5) = -0.2625, slack'(0.5) = 1.5, u = +1
        step = skew_direction(P03, BINARY2, np.array([1.0, 0.0]), np.array([0.5, 1.0]))
        assert step.v[0] == pytest.approx(0.175)
        assert step.lambdas[0] == pytest.approx((0.175 + 1.0) / 1.5)
        assert step.v[1] == 0.0
        assert not step.clipped.any()

    def test_midpoint_goes_right_at_clip_speed(self):
        for u0 in (-5.0, 0.0, 5.0):
            step = skew_direction(P03, BINARY2, np.array([u0, 0.0]), np.array([0.0, 1.0]))
            assert step.v[0] == P03.m_clip
            assert step.midpoint_hits.tolist() == [0]
            assert step.lambdas[0] == 0.0

    def test_clipping_bounds_velocity(self):
        params = ConstraintParams(epsilon=0.3, alpha=50.0, m_clip=1.0)
        step = skew_direction(params, BINARY2, np.array([0.0, 0.0]), np.array([0.4, -0.4]))
        assert step.clipped.tolist() == [True, True]
        assert np.abs(step.v).max() == 1.0
        assert abs(step.pre_clip[0]) > 1.0

    def test_velocity_bounded_by_gradient_or_clip(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            u = rng.normal(0, 3, 2)
            w = rng.uniform(-2, 2, 2)
            step = skew_direction(P03, BINARY2, u, w)
            bound = max(np.abs(u).max(), P03.m_clip)
            assert np.abs(step.v).max() <= bound + 1e-15

    def test_pullback_branch_ignores_gradient_scale(self):
        # where the pull-back fires, the velocity depends only on w
        w = np.array([0.5, 1.0])
        a = skew_direction(P03, BINARY2, np.array([1.0, 0.0]), w)
        b = skew_direction(P03, BINARY2, np.array([100.0, 0.0]), w)
        assert a.v[0] == b.v[0]

    def test_reconstruction_identity(self):
        # v = -u + lambda * slack' on active non-midpoint, non-clipped coords
        rng = np.random.default_rng(7)
        for _ in range(300):
            u = rng.normal(0, 2, 2)
            w = rng.uniform(-1.8, 1.8, 2)
            step = skew_direction(P03, BINARY2, u, w)
            _, dpsi = slack_vectors(P03, BINARY2, w)
            for i in step.active:
                if i in step.midpoint_hits or step.clipped[i]:
                    continue
                recon = -u[i] + step.lambdas[i] * dpsi[i]
                assert abs(recon - step.v[i]) <= 1e-12 * max(1.0, abs(step.v[i]))

    def test_multipliers_nonnegative_unclipped(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            u = rng.normal(0, 2, 2)
            w = rng.uniform(-2, 2, 2)
            step = skew_direction(P03, BINARY2, u, w)
            assert (step.lambdas[~step.clipped] >= 0.0).all()


def _random_case(rng):
    grid = QuantGrid.binary(6) if rng.random() < 0.5 else QuantGrid.uniform_int(4, 6)
    lo, hi = grid.levels(0)[0], grid.levels(0)[-1]
    params = ConstraintParams(
        epsilon=float(rng.choice([0.1, 0.3, 0.9, 0.05, 0.02])),
        alpha=float(rng.choice([0.1, 1.0, 5.0])),
        m_clip=1.0)
    u = rng.normal(0.0, 2.0, grid.dim)
    w = rng.uniform(lo - 0.5, hi + 0.5, grid.dim)
    return params, grid, u, w


class TestQpOracle:
    def test_inactive_coordinate(self):
        v, infeasible = qp_oracle(P03, BINARY2, np.array([0.4, -0.2]), np.array([1.0, -1.0]))
        assert v.tolist() == [-0.4, 0.2]
        assert not infeasible.any()

    def test_midpoint_declined(self):
        v, infeasible = qp_oracle(P03, BINARY2, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert infeasible.tolist() == [True, False]
        assert np.isnan(v[0])

    def test_matches_closed_form_randomized(self):
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(1000):
            params, grid, u, w = _random_case(rng)
            step = skew_direction(params, grid, u, w)
            ref, infeasible = qp_oracle(params, grid, u, w)
            ok = ~infeasible
            np.testing.assert_allclose(step.pre_clip[ok], ref[ok], atol=1e-10, rtol=0)
            checked += int(ok.sum())
        assert checked > 4000

    def test_admissibility_of_closed_form(self):
        # every returned active velocity satisfies its half-line constraint
        rng = np.random.default_rng(3)
        for _ in range(300):
            params, grid, u, w = _random_case(rng)
            step = skew_direction(params, grid, u, w)
            psi, dpsi = slack_vectors(params, grid, w)
            for i in step.active:
                if i in step.midpoint_hits:
                    continue
                rhs = -params.alpha * psi[i]
                pre = step.pre_clip[i]
                assert pre * dpsi[i] >= rhs or pre == rhs / dpsi[i]


class TestKktResidual:
    def test_unconstrained_stationary_interior(self):
        assert kkt_residual(P03, BINARY2, np.zeros(2), np.array([1.0, -1.0])) == 0.0

    def test_toy_problem_minimizers(self):
        model = QuadraticToyModel()
        edge = np.sqrt(1.0 - np.sqrt(0.3))
        w_con = np.array([edge, edge])
        assert kkt_residual(P03, BINARY2, model.grad(w_con), w_con) <= 1e-9
        w_unc = np.array([0.5, 0.5])
        assert kkt_residual(P03, BINARY2, model.grad(w_unc), w_unc) > 0.1

    def test_boundary_sign_mismatch(self):
        edge = np.sqrt(1.0 - np.sqrt(0.3))
        w = np.array([edge, edge])
        # slack' > 0 at the left band edge: an aligned gradient is stationary,
        # an outward-pointing one is not
        g_bad = np.array([-0.3, 0.2])
        assert kkt_residual(P03, BINARY2, g_bad, w) == pytest.approx(0.3)

    def test_infeasible_pays_violation(self):
        w = np.array([0.0, 1.0])
        r = kkt_residual(P03, BINARY2, np.array([0.05, 0.0]), w)
        assert r == pytest.approx(0.05 + 0.7)

    def test_interior_nonzero_gradient(self):
        r = kkt_residual(P03, BINARY2, np.array([0.2, -0.1]), np.array([1.0, -1.0]))
        assert r == pytest.approx(0.2)


@given(st.integers(min_value=0, max_value=10 ** 9))
@settings(max_examples=150, deadline=None)
def test_oracle_equivalence_property(case_seed):
    rng = np.random.default_rng(case_seed)
    params, grid, u, w = _random_case(rng)
    step = skew_direction(params, grid, u, w)
    ref, infeasible = qp_oracle(params, grid, u, w)
    ok = ~infeasible
    np.testing.assert_allclose(step.pre_clip[ok], ref[ok], atol=1e-10, rtol=0)
    assert np.array_equal(np.flatnonzero(infeasible), step.midpoint_hits)
