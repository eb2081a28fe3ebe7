"""Offline stage: critic TD learning and the advantage-weighted reference generator.

Critics train on the offline dataset alone with the usual value-bootstrap
target.  The value network regresses toward the expected frozen-critic value
under the exponentiated-advantage policy computed over the full action space
(no candidate subsampling offline).  The generator is then trained with the
flow-matching loss against targets proportional to exp(clipped advantage /
beta), again with full-action support, and its final parameters are frozen as
the reference for fine-tuning.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .actor import FlowActor, actor_step, make_actor, refresh_reference
from .envs import OfflineDataset
from .nets import mlp_forward
from .replay import (
    CriticPair,
    advantage_rows,
    critic_update,
    make_critic_pair,
    td_target,
    value_update,
)
from .targets import target_policy

__all__ = ["pretrain_critics", "pretrain_generator"]

FeatureFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _full_space_policies(
    cp: CriticPair,
    features: np.ndarray,
    n_actions: int,
    beta: float,
    clip_c: float,
    lagged: bool,
) -> np.ndarray:
    """exp(clipped advantage / beta) policies over all actions, row-normalized."""
    b = features.shape[0]
    full = [np.arange(n_actions, dtype=np.int64)] * b
    rows = advantage_rows(cp, features, full, clip_c, lagged=lagged)
    uniform = np.full(n_actions, 1.0 / n_actions)
    return np.stack([target_policy(uniform, r.clipped, beta) for r in rows])


def pretrain_critics(
    ds: OfflineDataset,
    feature_fn: FeatureFn,
    n_actions: int,
    steps: int,
    rng: np.random.Generator,
    *,
    gamma: float,
    tau: float,
    lr: float,
    batch_size: int,
    beta: float,
    clip_c: float,
    hidden: int = 256,
) -> tuple[CriticPair, list[dict]]:
    """TD-train twin critics and the value network on the offline data."""
    if len(ds) == 0:
        raise ValueError("offline dataset is empty")
    probe = feature_fn(ds.obs_idx[:1], ds.extras[:1])
    cp = make_critic_pair(probe.shape[1], n_actions, rng, hidden)
    trace = []
    for step in range(steps):
        idx = rng.integers(len(ds), size=batch_size)
        feats = feature_fn(ds.obs_idx[idx], ds.extras[idx])
        next_feats = feature_fn(ds.next_idx[idx], ds.next_extras[idx])
        v_next, _ = mlp_forward(cp.v_target, next_feats)
        y = td_target(ds.rewards[idx], v_next[:, 0], ds.dones[idx], gamma)
        q1_loss, q2_loss = critic_update(cp, feats, ds.actions[idx], y, lr)
        policies = _full_space_policies(cp, feats, n_actions, beta, clip_c, lagged=True)
        v_loss = value_update(cp, feats, policies, lr)
        cp.soft_update_targets(tau)
        if step % 100 == 0 or step == steps - 1:
            trace.append({"step": step, "q1": q1_loss, "q2": q2_loss, "v": v_loss})
    return cp, trace


def pretrain_generator(
    cp: CriticPair,
    features_pool: np.ndarray,
    n_actions: int,
    steps: int,
    rng: np.random.Generator,
    *,
    beta: float,
    clip_c: float,
    delta: float,
    n_euler: int,
    batch_size: int,
    lr: float,
    hidden: int = 256,
    advantage_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[FlowActor, list[dict]]:
    """Flow-matching pretraining of the generator on dataset states.

    ``features_pool`` holds the feature vectors states are drawn from.  The
    target policy per state is proportional to exp(clipped advantage / beta)
    over the whole action space; ``advantage_fn`` (features -> (B, K) clipped
    advantages) replaces the critic-derived advantages when supplied, which
    keeps fixture tests independent of critic training.
    """
    if features_pool.ndim != 2 or features_pool.shape[0] == 0:
        raise ValueError("features_pool must be a nonempty (N, F) array")
    actor = make_actor(features_pool.shape[1], n_actions, rng, hidden)
    uniform = np.full(n_actions, 1.0 / n_actions)
    trace = []
    for step in range(steps):
        idx = rng.integers(features_pool.shape[0], size=batch_size)
        feats = features_pool[idx]
        if advantage_fn is None:
            targets = _full_space_policies(cp, feats, n_actions, beta, clip_c, lagged=False)
        else:
            clipped = np.asarray(advantage_fn(feats), dtype=np.float64)
            targets = np.stack([target_policy(uniform, row, beta) for row in clipped])
        losses = actor_step(actor, feats, targets, 0.0, delta, n_euler, rng, lr)
        if step % 100 == 0 or step == steps - 1:
            trace.append({"step": step, "dfm": losses.dfm})
    refresh_reference(actor)
    return actor, trace
