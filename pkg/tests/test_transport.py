"""Bridge construction, the independent coupling, and candidate restriction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowrl.ctmc import exact_marginals
from flowrl.transport import (
    bridge_point,
    coupling_matrix,
    coupling_row,
    excluded_mass,
    expected_excluded_l1,
    integrate_coupling_batch,
    restrict_renormalize,
    sample_flow_time,
    stability_lhs_rhs,
    uniform_source,
)


def dirichlet(rng, k, alpha=1.0):
    return rng.dirichlet(np.full(k, alpha))


# A hypothesis strategy for (target, t): drawing raw weights keeps shrinking
# sane, the normalisation happens here rather than inside the test bodies.
targets_and_times = st.tuples(
    st.integers(min_value=2, max_value=12),
    st.integers(min_value=0, max_value=10**9),
    st.floats(min_value=0.0, max_value=0.95),
)


def _target_from(k, seed):
    rng = np.random.default_rng(seed)
    return dirichlet(rng, k)


class TestBridge:
    def test_endpoints(self):
        target = np.array([0.2, 0.5, 0.3])
        assert np.allclose(bridge_point(target, 0.0).p, uniform_source(3))
        assert np.allclose(bridge_point(target, 1.0).p, target)

    def test_midpoint_example(self):
        point = bridge_point(np.array([1.0, 0.0]), 0.5)
        assert np.allclose(point.p, [0.75, 0.25])
        assert np.allclose(point.p_dot, [0.5, -0.5])

    def test_custom_source(self):
        p0 = np.array([0.9, 0.1])
        point = bridge_point(np.array([0.0, 1.0]), 0.0, p0=p0)
        assert np.allclose(point.p, p0)

    def test_rejects_time_outside_unit_interval(self):
        with pytest.raises(ValueError, match="flow time"):
            bridge_point(np.array([0.5, 0.5]), 1.2)

    @given(targets_and_times)
    @settings(max_examples=60, deadline=None)
    def test_marginal_floor(self, draw):
        # With a uniform source, p_t(i) >= (1 - t)/K everywhere: the bridge
        # never starves a state before the endpoint.
        k, seed, t = draw
        point = bridge_point(_target_from(k, seed), t)
        assert point.p.min() >= (1.0 - t) / k - 1e-12


class TestCoupling:
    def test_two_state_rate_value(self):
        # target (1,0) at t=0: source 1 loses 0.5 mass, Z=0.5, p(1)=0.5,
        # so the rate into state 0 is 0.5*0.5/(0.5*0.5) = 1.
        point = bridge_point(np.array([1.0, 0.0]), 0.0)
        rates = coupling_row(point, 1)
        assert rates[0] == pytest.approx(1.0)
        assert rates[1] == 0.0

    def test_gaining_state_emits_nothing(self):
        point = bridge_point(np.array([1.0, 0.0]), 0.0)
        assert np.all(coupling_row(point, 0) == 0.0)

    def test_row_out_of_range(self):
        point = bridge_point(np.array([0.5, 0.5]), 0.0)
        with pytest.raises(ValueError, match="source"):
            coupling_row(point, 2)

    def test_matrix_rows_match_row_function(self):
        point = bridge_point(np.array([0.6, 0.1, 0.3]), 0.4)
        q = coupling_matrix(point)
        for i in range(3):
            row = coupling_row(point, i)
            off = q[i].copy()
            off[i] = 0.0
            assert np.allclose(off, row)
            assert q[i, i] == pytest.approx(-row.sum())

    def test_stationary_target_has_zero_generator(self):
        k = 4
        point = bridge_point(uniform_source(k), 0.3)
        assert np.all(coupling_matrix(point) == 0.0)

    @given(targets_and_times)
    @settings(max_examples=80, deadline=None)
    def test_forward_equation_identity(self, draw):
        # The defining property: under the coupling generator the net
        # probability flow into each state equals the bridge velocity.
        k, seed, t = draw
        point = bridge_point(_target_from(k, seed), t)
        q = coupling_matrix(point)
        assert np.all(q - np.diag(np.diag(q)) >= 0.0)
        assert np.allclose(q.sum(axis=1), 0.0, atol=1e-12)
        net_flow = point.p @ q
        assert np.allclose(net_flow, point.p_dot, atol=1e-9)


class TestFlowTime:
    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError, match="delta"):
            sample_flow_time(np.random.default_rng(0), 1.0)

    def test_distribution(self):
        rng = np.random.default_rng(13)
        draws = np.array([sample_flow_time(rng, 0.05) for _ in range(4000)])
        assert draws.max() < 0.95
        assert draws.min() >= 0.0
        se = (0.95 / np.sqrt(12.0)) / np.sqrt(4000)
        assert abs(draws.mean() - 0.475) < 3 * se


class TestRestriction:
    def test_renormalize_example(self):
        target = np.array([0.5, 0.3, 0.2])
        restricted = restrict_renormalize(target, np.array([0, 1]))
        assert np.allclose(restricted, [0.625, 0.375, 0.0])
        assert np.abs(restricted - target).sum() == pytest.approx(0.4)

    def test_excluded_mass(self):
        target = np.array([0.5, 0.3, 0.2])
        assert excluded_mass(target, np.array([0, 1])) == pytest.approx(0.2)
        assert excluded_mass(target, np.array([0, 1, 2])) == 0.0

    def test_rejects_empty_support(self):
        with pytest.raises(ValueError, match="excludes all"):
            restrict_renormalize(np.array([1.0, 0.0, 0.0]), np.array([1, 2]))

    def test_duplicate_candidates_are_idempotent(self):
        target = np.array([0.5, 0.3, 0.2])
        a = restrict_renormalize(target, np.array([0, 1]))
        b = restrict_renormalize(target, np.array([0, 1, 1, 0]))
        assert np.allclose(a, b)


class TestExpectedExcludedL1:
    def test_uniform_single_rollout(self):
        u = uniform_source(4)
        assert expected_excluded_l1(u, u, 1, 0) == pytest.approx(1.5)

    def test_large_uniform_budget_vanishes(self):
        u = uniform_source(4)
        assert expected_excluded_l1(u, u, 0, 100) < 1e-6

    def test_empty_budget_gives_full_gap(self):
        u = uniform_source(4)
        assert expected_excluded_l1(u, u, 0, 0) == pytest.approx(2.0)

    def test_rejects_negative_counts(self):
        u = uniform_source(4)
        with pytest.raises(ValueError, match="nonnegative"):
            expected_excluded_l1(u, u, -1, 0)

    def test_monotone_in_both_budgets(self):
        rng = np.random.default_rng(5)
        target = dirichlet(rng, 6)
        ref = dirichlet(rng, 6)
        grid = np.array(
            [[expected_excluded_l1(target, ref, r, s) for s in range(5)] for r in range(5)]
        )
        assert np.all(np.diff(grid, axis=0) <= 1e-12)
        assert np.all(np.diff(grid, axis=1) <= 1e-12)


class TestStabilityBound:
    def test_full_candidate_set_is_tight_at_zero(self):
        target = np.array([0.4, 0.35, 0.25])
        lhs, rhs = stability_lhs_rhs(target, np.arange(3), 0.3, 0.05, 0.05)
        assert lhs == 0.0
        assert rhs == 0.0

    def test_floor_violation_is_reported(self):
        # At t=0.98 the losing state keeps only 0.01 marginal mass.
        with pytest.raises(ValueError, match="below floor"):
            stability_lhs_rhs(np.array([1.0, 0.0]), np.array([0, 1]), 0.98, 0.05, 0.05)

    def test_bound_holds_on_random_instances(self):
        rng = np.random.default_rng(31)
        checked = 0
        while checked < 50:
            k = int(rng.integers(3, 8))
            target = dirichlet(rng, k)
            size = int(rng.integers(1, k))
            cand = rng.choice(k, size=size, replace=False)
            t = float(rng.uniform(0.05, 0.5))
            try:
                lhs, rhs = stability_lhs_rhs(target, cand, t, 0.05, 0.05)
            except ValueError:
                continue  # floors not met; not an instance the bound covers
            assert lhs <= rhs + 1e-12
            checked += 1


class TestIntegrateCouplingBatch:
    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(41)
        target = dirichlet(rng, 5)
        t_end, n_steps = 0.9, 2000
        dense = exact_marginals(
            lambda t: coupling_matrix(bridge_point(target, t)),
            uniform_source(5),
            t_end=t_end,
            n_steps=n_steps,
        )
        batch = integrate_coupling_batch(target[None, :], t_end, n_steps)[0]
        assert np.allclose(batch, dense, atol=1e-10)

    def test_reaches_target(self):
        rng = np.random.default_rng(43)
        targets = rng.dirichlet(np.ones(7), size=20)
        final = integrate_coupling_batch(targets, 1.0 - 1e-3, 10_000)
        gaps = np.abs(final - targets).sum(axis=1)
        assert gaps.max() <= 1e-2

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError, match="targets"):
            integrate_coupling_batch(np.ones(3), 0.5, 10)
        with pytest.raises(ValueError, match="positive"):
            integrate_coupling_batch(np.eye(2), 0.5, 0)
