"""Rate networks, flow-matching and KL losses, and the actor update."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowrl import ctmc
from flowrl.actor import (
    RATE_FLOOR,
    FlowActor,
    actor_step,
    build_target_plan,
    dfm_loss,
    init_rate_network,
    make_actor,
    path_kl_loss,
    paths_kl_estimates,
    rate_row,
    rate_rows,
    refresh_reference,
    sample_actions,
    sample_kl_paths,
    sample_terminal_actions,
)
from flowrl.nets import adam_init, flatten_params
from flowrl.replay import make_critic_pair

FEAT = np.array([0.3, -0.7, 1.1])


def constant_rate_net(rate, n_actions, feat_dim=3, hidden=8):
    """Zero-weight network whose off-diagonal rates all equal ``rate``."""
    net = init_rate_network(feat_dim, n_actions, np.random.default_rng(0), hidden, zero=True)
    net.mlp.b3[:] = np.log(np.expm1(rate)) if rate > 0 else -40.0
    return net


def column_drift_net(target, n_actions, feat_dim=3, hidden=8):
    """Rates of ~40 into ``target`` and ~0 elsewhere."""
    net = constant_rate_net(0.0, n_actions, feat_dim, hidden)
    net.mlp.b3[target] = 40.0
    return net


def dense_generator_fn(net, feature):
    k = net.n_actions
    feats = np.tile(feature, (k, 1))
    actions = np.arange(k)

    def fn(t):
        rows, _ = rate_rows(net, feats, actions, np.full(k, t))
        gen = rows.copy()
        gen[actions, actions] = -rows.sum(axis=1)
        return gen

    return fn


class TestRateRows:
    def test_zero_net_gives_log2(self):
        net = init_rate_network(3, 4, np.random.default_rng(1), 8, zero=True)
        rates, _ = rate_rows(net, FEAT[None, :], np.array([2]), np.array([0.5]))
        expected = np.full(4, np.log(2.0))
        expected[2] = 0.0
        np.testing.assert_allclose(rates[0], expected)

    def test_large_negative_logit_vanishes(self):
        net = constant_rate_net(0.0, 4)
        rates, _ = rate_rows(net, FEAT[None, :], np.array([0]), np.array([0.0]))
        assert rates[0, 1:].max() < 1e-17

    def test_constant_rate_inverse_softplus(self):
        net = constant_rate_net(1.0, 3)
        row = rate_row(net, FEAT, 1, 0.25)
        np.testing.assert_allclose(row.rates[[0, 2]], 1.0, rtol=1e-12)
        assert row.rates[1] == 0.0

    def test_own_action_always_zero(self):
        net = init_rate_network(3, 5, np.random.default_rng(2), 16)
        for a in range(5):
            row = rate_row(net, FEAT, a, 0.7)
            assert row.rates[a] == 0.0

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.integers(2, 9),
        st.floats(0.0, 1.0),
    )
    def test_rows_are_always_valid(self, seed, k, t):
        rng = np.random.default_rng(seed)
        net = init_rate_network(3, k, rng, 8)
        action = int(rng.integers(k))
        row = rate_row(net, rng.normal(size=3), action, t)
        # rate_row validates internally; double-check the invariants anyway
        assert row.rates.shape == (k,)
        assert np.isfinite(row.rates).all()
        assert (row.rates >= 0).all()


class TestDfmLoss:
    def test_single_unit_gap(self):
        net = constant_rate_net(0.0, 2)
        targets = np.array([[0.0, 1.0]])
        loss, _ = dfm_loss(net, FEAT[None, :], np.array([0]), np.array([0.2]), targets)
        assert loss == pytest.approx(1.0, abs=1e-8)

    def test_zero_net_against_zero_targets(self):
        net = init_rate_network(3, 3, np.random.default_rng(3), 8, zero=True)
        loss, _ = dfm_loss(
            net, FEAT[None, :], np.array([1]), np.array([0.5]), np.zeros((1, 3))
        )
        assert loss == pytest.approx(2.0 * np.log(2.0) ** 2)

    def test_source_column_ignored(self):
        net = init_rate_network(3, 3, np.random.default_rng(4), 8)
        targets = np.zeros((1, 3))
        loss_a, _ = dfm_loss(net, FEAT[None, :], np.array([1]), np.array([0.5]), targets)
        targets[0, 1] = 1e6
        loss_b, _ = dfm_loss(net, FEAT[None, :], np.array([1]), np.array([0.5]), targets)
        assert loss_a == loss_b

    def test_batch_mean(self):
        net = constant_rate_net(0.0, 2)
        feats = np.tile(FEAT, (2, 1))
        targets = np.array([[0.0, 1.0], [0.0, 3.0]])
        loss, _ = dfm_loss(net, feats, np.zeros(2, dtype=np.int64), np.full(2, 0.1), targets)
        assert loss == pytest.approx((1.0 + 9.0) / 2.0, abs=1e-6)


class TestPathKl:
    def test_identical_networks_give_exact_zero(self):
        net = init_rate_network(3, 4, np.random.default_rng(5), 16)
        feats = np.tile(FEAT, (6, 1))
        histories, _ = sample_kl_paths(net, feats, 10, np.random.default_rng(6))
        for est in paths_kl_estimates(net, net, feats, histories):
            assert est.total == 0.0

    def test_refreshed_reference_gives_exact_zero(self):
        actor = make_actor(3, 4, np.random.default_rng(7), hidden=16)
        plan_rng = np.random.default_rng(8)
        actor_step(
            actor,
            np.tile(FEAT, (4, 1)),
            np.full((4, 4), 0.25),
            alpha=0.1,
            delta=0.05,
            n_steps=5,
            rng=plan_rng,
            lr=1e-3,
        )
        refresh_reference(actor)
        feats = np.tile(FEAT, (3, 1))
        histories, _ = sample_kl_paths(actor.net, feats, 8, plan_rng)
        for est in paths_kl_estimates(actor.net, actor.ref, feats, histories):
            assert est.total == 0.0

    def test_explicit_history_value(self):
        # theta holds rate 1, the reference rate 1/2; two jumps on the path
        net = constant_rate_net(1.0, 2)
        ref = constant_rate_net(0.5, 2)
        history = np.array([0, 1, 1, 0, 0])
        est, _ = path_kl_loss(net, ref, FEAT, history)
        assert est.jump_term == pytest.approx(2.0 * np.log(2.0), rel=1e-12)
        assert est.holding_term == pytest.approx(-0.5, rel=1e-12)
        assert est.total == pytest.approx(2.0 * np.log(2.0) - 0.5, rel=1e-12)

    def test_rate_floor_in_jump_logs(self):
        net = constant_rate_net(0.0, 2)  # ~4e-18, floored to 1e-8
        ref = constant_rate_net(0.5, 2)
        history = np.array([0, 1, 1, 1])
        est, _ = path_kl_loss(net, ref, FEAT, history)
        assert est.jump_term == pytest.approx(np.log(RATE_FLOOR) - np.log(0.5))

    def test_reference_gets_no_gradient(self):
        net = constant_rate_net(1.0, 2)
        ref = constant_rate_net(0.5, 2)
        ref_before = flatten_params(ref.mlp).copy()
        path_kl_loss(net, ref, FEAT, np.array([0, 1, 0, 1]))
        np.testing.assert_array_equal(flatten_params(ref.mlp), ref_before)


class TestSampling:
    def test_zero_generator_keeps_uniform_start(self):
        net = constant_rate_net(0.0, 4)
        feats = np.tile(FEAT, (4000, 1))
        actions, clamps = sample_actions(net, feats, 5, np.random.default_rng(9))
        assert clamps == 0
        counts = np.bincount(actions, minlength=4)
        # X stays at its uniform start; 4 sigma band for n=4000, p=1/4
        assert np.abs(counts - 1000).max() < 4 * np.sqrt(4000 * 0.25 * 0.75)

    def test_drift_net_absorbs_everything(self):
        net = column_drift_net(2, 5)
        feats = np.tile(FEAT, (64, 1))
        terminals, clamps = sample_terminal_actions(
            net, feats, 4, 5, np.random.default_rng(10)
        )
        assert terminals.shape == (64, 4)
        assert (terminals == 2).all()
        assert clamps > 0

    def test_kl_paths_shape_and_start(self):
        net = init_rate_network(3, 4, np.random.default_rng(11), 8)
        feats = np.tile(FEAT, (7, 1))
        histories, _ = sample_kl_paths(net, feats, 6, np.random.default_rng(12))
        assert histories.shape == (7, 7)
        assert set(np.unique(histories)) <= {0, 1, 2, 3}


class TestActorStep:
    def _actor(self, k=4, hidden=16, seed=13):
        return make_actor(3, k, np.random.default_rng(seed), hidden=hidden)

    def test_alpha_zero_skips_kl(self):
        actor = self._actor()
        before = flatten_params(actor.net.mlp).copy()
        losses = actor_step(
            actor,
            np.tile(FEAT, (4, 1)),
            np.full((4, 4), 0.25),
            alpha=0.0,
            delta=0.05,
            n_steps=5,
            rng=np.random.default_rng(14),
            lr=1e-3,
        )
        assert losses.kl == 0.0
        assert losses.clamped_steps == 0
        assert losses.dfm >= 0.0
        assert not np.array_equal(flatten_params(actor.net.mlp), before)

    def test_reference_untouched_by_updates(self):
        actor = self._actor()
        ref_before = flatten_params(actor.ref.mlp).copy()
        for _ in range(3):
            actor_step(
                actor,
                np.tile(FEAT, (4, 1)),
                np.full((4, 4), 0.25),
                alpha=0.1,
                delta=0.05,
                n_steps=5,
                rng=np.random.default_rng(15),
                lr=1e-3,
            )
        np.testing.assert_array_equal(flatten_params(actor.ref.mlp), ref_before)

    def test_refresh_snapshots_current_net(self):
        actor = self._actor()
        actor.net.mlp.b3[:] += 0.5
        refresh_reference(actor)
        np.testing.assert_array_equal(
            flatten_params(actor.ref.mlp), flatten_params(actor.net.mlp)
        )
        actor.net.mlp.b3[:] += 1.0
        assert not np.array_equal(
            flatten_params(actor.ref.mlp), flatten_params(actor.net.mlp)
        )

    def _trained_marginal(self, alpha, steps=800):
        rng = np.random.default_rng(16)
        actor = self._actor(k=4, hidden=16, seed=17)
        target = np.array([0.94, 0.02, 0.02, 0.02])
        feats = np.tile(FEAT, (4, 1))
        for _ in range(steps):
            actor_step(
                actor,
                feats,
                np.tile(target, (4, 1)),
                alpha=alpha,
                delta=0.05,
                n_steps=5,
                rng=rng,
                lr=1e-3,
            )
        p0 = np.full(4, 0.25)
        return ctmc.exact_marginals(
            dense_generator_fn(actor.net, FEAT), p0, t_end=1.0, n_steps=400
        )

    def test_kl_weight_holds_policy_near_reference(self):
        # Adam normalizes per-parameter step sizes, so the trust-region effect
        # of the KL weight shows up in where training settles, not in the size
        # of a single update.  The reference is the init: a near-uniform
        # terminal law, so drift from uniform measures departure from it.
        p0 = np.full(4, 0.25)
        drift = {
            alpha: np.abs(self._trained_marginal(alpha) - p0).sum()
            for alpha in (0.0, 1.0, 10.0)
        }
        assert drift[10.0] < drift[1.0] < drift[0.0]

    def test_long_training_reaches_fixed_target(self):
        rng = np.random.default_rng(18)
        actor = self._actor(k=4, hidden=32, seed=19)
        target = np.array([0.55, 0.25, 0.15, 0.05])
        feats = np.tile(FEAT, (4, 1))
        for _ in range(2000):
            actor_step(
                actor,
                feats,
                np.tile(target, (4, 1)),
                alpha=0.0,
                delta=0.05,
                n_steps=5,
                rng=rng,
                lr=3e-3,
            )
        terminal = ctmc.exact_marginals(
            dense_generator_fn(actor.net, FEAT),
            np.full(4, 0.25),
            t_end=1.0,
            n_steps=2000,
        )
        assert np.abs(terminal - target).sum() < 0.1


class TestBuildTargetPlan:
    def _setup(self, k=6, n_feat=3):
        rng = np.random.default_rng(20)
        actor = make_actor(n_feat, k, rng, hidden=16)
        cp = make_critic_pair(n_feat, k, rng, hidden=16)
        feats = rng.normal(size=(3, n_feat))
        return actor, cp, feats, rng

    def test_rows_are_distributions_on_support(self):
        actor, cp, feats, rng = self._setup()
        plan = build_target_plan(
            actor, cp, feats, n_roll=4, n_rand=2, n_steps=5,
            smooth_eps=0.01, beta=1.0, clip_c=5.0, rng=rng, force_sampled=True,
        )
        assert plan.target_full.shape == (3, 6)
        for i, cand in enumerate(plan.candidate_sets):
            on = plan.target_full[i, cand.indices]
            assert on.sum() == pytest.approx(1.0)
            assert (on > 0).all()
            off = np.delete(plan.target_full[i], cand.indices)
            assert (off == 0).all()
            lag = plan.lagged_full[i, cand.indices]
            assert lag.sum() == pytest.approx(1.0)

    def test_small_space_enumerates(self):
        actor, cp, feats, rng = self._setup(k=4)
        plan = build_target_plan(
            actor, cp, feats, n_roll=4, n_rand=2, n_steps=5,
            smooth_eps=0.01, beta=1.0, clip_c=5.0, rng=rng,
        )
        for cand in plan.candidate_sets:
            np.testing.assert_array_equal(cand.indices, np.arange(4))
        assert (plan.target_full > 0).all()

    def test_no_rollouts_uniform_reference(self):
        actor, cp, feats, rng = self._setup(k=4)
        plan = build_target_plan(
            actor, cp, feats, n_roll=0, n_rand=4, n_steps=5,
            smooth_eps=0.01, beta=1.0, clip_c=5.0, rng=rng,
        )
        for ref, cand in zip(plan.references, plan.candidate_sets):
            np.testing.assert_allclose(ref, 1.0 / len(cand))

    def test_rollouts_shape_counts(self):
        actor, cp, feats, rng = self._setup(k=32)
        plan = build_target_plan(
            actor, cp, feats, n_roll=6, n_rand=4, n_steps=5,
            smooth_eps=0.01, beta=1.0, clip_c=5.0, rng=rng,
        )
        for cand in plan.candidate_sets:
            assert cand.counts.sum() == 6
            assert len(cand) <= 10
