"""Replay buffer mixing, TD targets, critic updates, and advantages."""

import dataclasses

import numpy as np
import pytest

from flowrl.replay import (
    ReplayBuffer,
    advantage_row,
    critic_update,
    make_critic_pair,
    td_target,
    value_target,
    value_update,
)


def zeroed(net, b3):
    """Blank a network so its output is exactly the final bias."""
    for arr in net.arrays():
        arr[:] = 0.0
    net.b3[:] = np.asarray(b3, dtype=np.float64)
    return net


def constant_pair(rng, q_out, *, n_actions, in_dim=3, v_out=0.0):
    cp = make_critic_pair(in_dim, n_actions, rng, hidden=8)
    for net in (cp.q1, cp.q2, cp.q1_target, cp.q2_target):
        zeroed(net, q_out)
    zeroed(cp.v, [v_out])
    zeroed(cp.v_target, [v_out])
    return cp


class TestReplayBuffer:
    def test_seed_offline_under_cap(self, toy3_dataset):
        buf = ReplayBuffer(n_extras=0, capacity=64)
        buf.seed_offline(toy3_dataset, np.random.default_rng(0))
        assert buf.n_offline == len(toy3_dataset)
        assert buf.n_online == 0

    def test_seed_offline_subsamples_above_cap(self, toy3_dataset):
        buf = ReplayBuffer(n_extras=0, capacity=64)
        buf.seed_offline(toy3_dataset, np.random.default_rng(0), cap=10)
        assert buf.n_offline == 10

    def test_seed_offline_rejects_empty(self, toy3_dataset):
        empty = dataclasses.replace(
            toy3_dataset,
            obs_idx=toy3_dataset.obs_idx[:0],
            extras=toy3_dataset.extras[:0],
            actions=toy3_dataset.actions[:0],
            rewards=toy3_dataset.rewards[:0],
            next_idx=toy3_dataset.next_idx[:0],
            next_extras=toy3_dataset.next_extras[:0],
            dones=toy3_dataset.dones[:0],
        )
        buf = ReplayBuffer(n_extras=0)
        with pytest.raises(ValueError, match="empty"):
            buf.seed_offline(empty, np.random.default_rng(0))

    def test_seed_offline_checks_extras_width(self, toy3_dataset):
        buf = ReplayBuffer(n_extras=2)
        with pytest.raises(ValueError, match="extras"):
            buf.seed_offline(toy3_dataset, np.random.default_rng(0))

    def test_ring_overwrites_oldest(self):
        buf = ReplayBuffer(n_extras=0, capacity=4)
        for i in range(6):
            buf.add((i, ()), 0, 0.0, (i, ()), False)
        assert buf.n_online == 4
        rng = np.random.default_rng(1)
        seen = set()
        for _ in range(20):
            seen.update(buf.sample_mixed(rng, 4, rho=0.0).obs_idx.tolist())
        assert seen == {2, 3, 4, 5}

    def test_mixed_counts(self, toy3_dataset):
        buf = ReplayBuffer(n_extras=0, capacity=32)
        buf.seed_offline(toy3_dataset, np.random.default_rng(0))
        for i in range(5):
            buf.add((100 + i, ()), 0, 0.0, (100 + i, ()), False)
        rng = np.random.default_rng(2)
        batch = buf.sample_mixed(rng, 8, rho=0.25)
        assert len(batch) == 8
        assert int((batch.obs_idx >= 100).sum()) == 6
        batch = buf.sample_mixed(rng, 7, rho=0.25)  # floor(1.75) offline draws
        assert int((batch.obs_idx < 100).sum()) == 1

    def test_mixed_pure_ends(self, toy3_dataset):
        buf = ReplayBuffer(n_extras=0, capacity=32)
        buf.seed_offline(toy3_dataset, np.random.default_rng(0))
        buf.add((100, ()), 0, 0.0, (100, ()), False)
        rng = np.random.default_rng(3)
        assert (buf.sample_mixed(rng, 6, rho=1.0).obs_idx < 100).all()
        assert (buf.sample_mixed(rng, 6, rho=0.0).obs_idx == 100).all()

    def test_mixed_errors(self, toy3_dataset):
        rng = np.random.default_rng(4)
        buf = ReplayBuffer(n_extras=0)
        with pytest.raises(ValueError, match="rho"):
            buf.sample_mixed(rng, 4, rho=1.5)
        with pytest.raises(ValueError, match="offline"):
            buf.sample_mixed(rng, 4, rho=1.0)
        buf.seed_offline(toy3_dataset, rng)
        with pytest.raises(ValueError, match="empty"):
            buf.sample_mixed(rng, 4, rho=0.5)

    def test_sample_offline_requires_data(self):
        buf = ReplayBuffer(n_extras=0)
        with pytest.raises(ValueError, match="offline"):
            buf.sample_offline(np.random.default_rng(0), 4)


class TestTdTarget:
    def test_bootstrap(self):
        assert td_target(1.0, 2.0, 0, 0.99) == pytest.approx(2.98)

    def test_done_cuts_bootstrap(self):
        assert td_target(1.0, 2.0, 1, 0.99) == pytest.approx(1.0)

    def test_vectorized(self):
        y = td_target(
            np.array([1.0, 1.0]), np.array([2.0, 2.0]), np.array([0, 1]), 0.99
        )
        np.testing.assert_allclose(y, [2.98, 1.0])


class TestCriticUpdates:
    def test_losses_decrease(self):
        rng = np.random.default_rng(5)
        cp = make_critic_pair(4, 3, rng, hidden=16)
        features = rng.normal(size=(32, 4))
        actions = rng.integers(3, size=32)
        targets = rng.normal(size=32)
        first = critic_update(cp, features, actions, targets, lr=1e-2)
        for _ in range(80):
            last = critic_update(cp, features, actions, targets, lr=1e-2)
        assert last[0] < first[0]
        assert last[1] < first[1]

    def test_value_target_uniform_policy(self):
        cp = constant_pair(np.random.default_rng(6), [1.0, 3.0], n_actions=2)
        feats = np.zeros((1, 3))
        y = value_target(cp, feats, np.array([[0.5, 0.5]]))
        assert y[0] == pytest.approx(2.0)

    def test_value_target_is_pessimistic(self):
        cp = constant_pair(np.random.default_rng(7), [1.0, 3.0], n_actions=2)
        zeroed(cp.q2_target, [0.0, 3.0])
        y = value_target(cp, np.zeros((1, 3)), np.array([[0.5, 0.5]]))
        assert y[0] == pytest.approx(1.5)

    def test_value_update_fits_target(self):
        rng = np.random.default_rng(8)
        cp = make_critic_pair(3, 2, rng, hidden=16)
        feats = rng.normal(size=(16, 3))
        policies = np.full((16, 2), 0.5)
        first = value_update(cp, feats, policies, lr=1e-2)
        for _ in range(100):
            last = value_update(cp, feats, policies, lr=1e-2)
        assert last < first

    def test_soft_update_targets(self):
        rng = np.random.default_rng(9)
        cp = make_critic_pair(3, 2, rng, hidden=8)
        cp.q1.b3[:] = 7.0
        cp.v.b3[:] = -4.0
        cp.soft_update_targets(1.0)
        np.testing.assert_array_equal(cp.q1_target.b3, cp.q1.b3)
        np.testing.assert_array_equal(cp.v_target.b3, cp.v.b3)
        cp.q1.b3[:] = 8.0
        cp.soft_update_targets(0.1)
        np.testing.assert_allclose(cp.q1_target.b3, 7.1)


class TestAdvantages:
    def test_two_point_row(self):
        cp = constant_pair(np.random.default_rng(10), [1.0, 3.0], n_actions=2)
        row = advantage_row(cp, np.zeros(3), np.array([0, 1]), clip_c=5.0)
        np.testing.assert_allclose(row.raw, [1.0, 3.0])
        np.testing.assert_allclose(row.normalized, [-1.0, 1.0], atol=1e-5)
        assert row.mean == pytest.approx(2.0)
        assert row.std == pytest.approx(1.0)

    def test_baseline_subtracted(self):
        cp = constant_pair(
            np.random.default_rng(11), [1.0, 3.0], n_actions=2, v_out=2.0
        )
        row = advantage_row(cp, np.zeros(3), np.array([0, 1]), clip_c=5.0)
        np.testing.assert_allclose(row.raw, [-1.0, 1.0])

    def test_constant_row_normalizes_to_zero(self):
        cp = constant_pair(np.random.default_rng(12), [2.0, 2.0, 2.0], n_actions=3)
        row = advantage_row(cp, np.zeros(3), np.arange(3), clip_c=5.0)
        np.testing.assert_array_equal(row.normalized, 0.0)

    def test_clip_binds(self):
        # a point mass across 17 candidates normalizes to 4 sigma, past the clip
        k = 17
        outs = np.zeros(k)
        outs[-1] = 10.0
        cp = constant_pair(np.random.default_rng(13), outs, n_actions=k)
        row = advantage_row(cp, np.zeros(3), np.arange(k), clip_c=3.0)
        assert row.normalized.max() > 3.0
        assert row.clipped.max() == pytest.approx(3.0)
        np.testing.assert_array_equal(
            row.clipped[:-1], row.normalized[:-1]
        )

    def test_normalization_moments(self):
        rng = np.random.default_rng(14)
        cp = make_critic_pair(3, 8, rng, hidden=8)
        row = advantage_row(cp, rng.normal(size=3), np.arange(8), clip_c=50.0)
        assert np.mean(row.normalized) == pytest.approx(0.0, abs=1e-9)
        assert np.std(row.normalized) == pytest.approx(1.0, abs=1e-4)

    def test_twin_min(self):
        cp = constant_pair(np.random.default_rng(15), [0.0, 4.0], n_actions=2)
        zeroed(cp.q2, [4.0, 0.0])
        row = advantage_row(cp, np.zeros(3), np.array([0, 1]), clip_c=5.0)
        np.testing.assert_array_equal(row.raw, 0.0)

    def test_lagged_uses_frozen_critics(self):
        cp = constant_pair(np.random.default_rng(16), [5.0, 5.0], n_actions=2)
        zeroed(cp.q1_target, [1.0, 3.0])
        zeroed(cp.q2_target, [1.0, 3.0])
        live = advantage_row(cp, np.zeros(3), np.array([0, 1]), clip_c=5.0)
        frozen = advantage_row(
            cp, np.zeros(3), np.array([0, 1]), clip_c=5.0, lagged=True
        )
        np.testing.assert_array_equal(live.raw, 5.0)
        np.testing.assert_allclose(frozen.raw, [1.0, 3.0])

    def test_candidate_subset(self):
        cp = constant_pair(np.random.default_rng(17), [1.0, 9.0, 3.0], n_actions=3)
        row = advantage_row(cp, np.zeros(3), np.array([0, 2]), clip_c=5.0)
        np.testing.assert_allclose(row.raw, [1.0, 3.0])
