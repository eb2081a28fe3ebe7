"""Mixed replay, twin critics with a value network, and advantage rows.

The critics are Q-vector networks (one output per action).  Advantages use
the pessimistic minimum of the two online critics against the target value
network, are normalized per state over the candidate actions with a
population standard deviation, and are clipped to a configured band so the
exponential reweighting downstream stays bounded.

Loss functions return (loss, grads) pairs without touching optimizer state,
so they can be checked against finite differences; the *_update wrappers
apply one Adam step and the soft target updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import OfflineDataset
from .nets import (
    AdamState,
    Mlp,
    MlpGrads,
    adam_init,
    adam_step,
    clone_mlp,
    init_mlp,
    mlp_backward,
    mlp_forward,
    soft_update,
)

__all__ = [
    "TransitionBatch",
    "ReplayBuffer",
    "CriticPair",
    "AdvantageRow",
    "make_critic_pair",
    "td_target",
    "critic_loss",
    "critic_update",
    "value_target",
    "value_loss",
    "value_update",
    "advantage_rows",
    "advantage_row",
]

DEFAULT_CAPACITY = 100_000
NORM_EPS = 1e-6


@dataclass
class TransitionBatch:
    obs_idx: np.ndarray
    extras: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_idx: np.ndarray
    next_extras: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return int(self.obs_idx.shape[0])


class ReplayBuffer:
    """Online ring buffer plus an immutable offline block.

    Mixed batches take exactly floor(rho * B) offline transitions and the
    remainder online, each drawn uniformly within its source.
    """

    def __init__(self, n_extras: int, capacity: int = DEFAULT_CAPACITY):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.n_extras = n_extras
        self._obs = np.zeros(capacity, dtype=np.int64)
        self._ext = np.zeros((capacity, n_extras))
        self._act = np.zeros(capacity, dtype=np.int64)
        self._rew = np.zeros(capacity)
        self._nxt = np.zeros(capacity, dtype=np.int64)
        self._nxt_ext = np.zeros((capacity, n_extras))
        self._done = np.zeros(capacity, dtype=bool)
        self._size = 0
        self._pos = 0
        self._off: TransitionBatch | None = None

    @property
    def n_online(self) -> int:
        return self._size

    @property
    def n_offline(self) -> int:
        return 0 if self._off is None else len(self._off)

    def seed_offline(
        self,
        ds: OfflineDataset,
        rng: np.random.Generator,
        cap: int = 10_000,
    ) -> None:
        """Attach the offline side, subsampling without replacement above ``cap``."""
        n = len(ds)
        if n == 0:
            raise ValueError("offline dataset is empty")
        if ds.extras.shape[1] != self.n_extras:
            raise ValueError("dataset extras width does not match buffer")
        idx = np.arange(n) if n <= cap else np.sort(rng.choice(n, size=cap, replace=False))
        self._off = TransitionBatch(
            obs_idx=ds.obs_idx[idx].copy(),
            extras=ds.extras[idx].copy(),
            actions=ds.actions[idx].copy(),
            rewards=ds.rewards[idx].copy(),
            next_idx=ds.next_idx[idx].copy(),
            next_extras=ds.next_extras[idx].copy(),
            dones=ds.dones[idx].copy(),
        )

    def add(self, obs, action: int, reward: float, next_obs, done: bool) -> None:
        p = self._pos
        self._obs[p] = obs[0]
        self._ext[p] = np.asarray(obs[1], dtype=np.float64)
        self._act[p] = action
        self._rew[p] = reward
        self._nxt[p] = next_obs[0]
        self._nxt_ext[p] = np.asarray(next_obs[1], dtype=np.float64)
        self._done[p] = done
        self._pos = (p + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _gather_online(self, idx: np.ndarray) -> TransitionBatch:
        return TransitionBatch(
            obs_idx=self._obs[idx],
            extras=self._ext[idx],
            actions=self._act[idx],
            rewards=self._rew[idx],
            next_idx=self._nxt[idx],
            next_extras=self._nxt_ext[idx],
            dones=self._done[idx],
        )

    def _gather_offline(self, idx: np.ndarray) -> TransitionBatch:
        off = self._off
        assert off is not None
        return TransitionBatch(
            obs_idx=off.obs_idx[idx],
            extras=off.extras[idx],
            actions=off.actions[idx],
            rewards=off.rewards[idx],
            next_idx=off.next_idx[idx],
            next_extras=off.next_extras[idx],
            dones=off.dones[idx],
        )

    def sample_offline(self, rng: np.random.Generator, batch_size: int) -> TransitionBatch:
        if self.n_offline == 0:
            raise ValueError("no offline data attached")
        idx = rng.integers(self.n_offline, size=batch_size)
        return self._gather_offline(idx)

    def sample_mixed(
        self,
        rng: np.random.Generator,
        batch_size: int,
        rho: float,
    ) -> TransitionBatch:
        if not 0.0 <= rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        n_off = int(np.floor(rho * batch_size))
        n_on = batch_size - n_off
        if n_off > 0 and self.n_offline == 0:
            raise ValueError("mixed batch requests offline data but none is attached")
        if n_on > 0 and self.n_online == 0:
            raise ValueError("mixed batch requests online data but the buffer is empty")
        parts = []
        if n_off > 0:
            parts.append(self._gather_offline(rng.integers(self.n_offline, size=n_off)))
        if n_on > 0:
            parts.append(self._gather_online(rng.integers(self.n_online, size=n_on)))
        if len(parts) == 1:
            return parts[0]
        a, b = parts
        return TransitionBatch(
            obs_idx=np.concatenate([a.obs_idx, b.obs_idx]),
            extras=np.concatenate([a.extras, b.extras]),
            actions=np.concatenate([a.actions, b.actions]),
            rewards=np.concatenate([a.rewards, b.rewards]),
            next_idx=np.concatenate([a.next_idx, b.next_idx]),
            next_extras=np.concatenate([a.next_extras, b.next_extras]),
            dones=np.concatenate([a.dones, b.dones]),
        )


# ---------------------------------------------------------------------------
# Critics and value network
# ---------------------------------------------------------------------------


@dataclass
class CriticPair:
    """Twin Q networks, a state-value network, and frozen target copies."""

    q1: Mlp
    q2: Mlp
    v: Mlp
    q1_target: Mlp
    q2_target: Mlp
    v_target: Mlp
    adam_q1: AdamState
    adam_q2: AdamState
    adam_v: AdamState

    def soft_update_targets(self, tau: float) -> None:
        soft_update(self.q1_target, self.q1, tau)
        soft_update(self.q2_target, self.q2, tau)
        soft_update(self.v_target, self.v, tau)


def make_critic_pair(
    in_dim: int,
    n_actions: int,
    rng: np.random.Generator,
    hidden: int = 256,
) -> CriticPair:
    q1 = init_mlp(in_dim, n_actions, rng, hidden)
    q2 = init_mlp(in_dim, n_actions, rng, hidden)
    v = init_mlp(in_dim, 1, rng, hidden)
    return CriticPair(
        q1=q1,
        q2=q2,
        v=v,
        q1_target=clone_mlp(q1),
        q2_target=clone_mlp(q2),
        v_target=clone_mlp(v),
        adam_q1=adam_init(q1),
        adam_q2=adam_init(q2),
        adam_v=adam_init(v),
    )


def td_target(
    rewards: np.ndarray,
    v_next: np.ndarray,
    dones: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma * v_next * (1 - done), elementwise."""
    return np.asarray(rewards) + gamma * np.asarray(v_next) * (1.0 - np.asarray(dones, dtype=np.float64))


def critic_loss(
    net: Mlp,
    features: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, MlpGrads]:
    """Mean squared Bellman error of the chosen-action Q values."""
    n = features.shape[0]
    out, cache = mlp_forward(net, features)
    picked = out[np.arange(n), actions]
    err = picked - targets
    loss = float(np.mean(err**2))
    grad_out = np.zeros_like(out)
    grad_out[np.arange(n), actions] = 2.0 * err / n
    return loss, mlp_backward(net, cache, grad_out)


def critic_update(
    cp: CriticPair,
    features: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    lr: float,
) -> tuple[float, float]:
    """One Adam step on each critic toward the shared stop-gradient targets."""
    loss1, g1 = critic_loss(cp.q1, features, actions, targets)
    loss2, g2 = critic_loss(cp.q2, features, actions, targets)
    adam_step(cp.q1, g1, cp.adam_q1, lr)
    adam_step(cp.q2, g2, cp.adam_q2, lr)
    return loss1, loss2


def value_target(cp: CriticPair, features: np.ndarray, policies: np.ndarray) -> np.ndarray:
    """Expected pessimistic frozen-critic value under the lagged policy.

    ``policies`` is (B, K) with zeros off the candidate set; targets are
    computed entirely from the frozen networks.
    """
    q1, _ = mlp_forward(cp.q1_target, features)
    q2, _ = mlp_forward(cp.q2_target, features)
    return np.sum(policies * np.minimum(q1, q2), axis=1)


def value_loss(
    net: Mlp,
    features: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, MlpGrads]:
    n = features.shape[0]
    out, cache = mlp_forward(net, features)
    err = out[:, 0] - targets
    loss = float(np.mean(err**2))
    grad_out = (2.0 * err / n)[:, None]
    return loss, mlp_backward(net, cache, grad_out)


def value_update(
    cp: CriticPair,
    features: np.ndarray,
    policies: np.ndarray,
    lr: float,
) -> float:
    targets = value_target(cp, features, policies)
    loss, grads = value_loss(cp.v, features, targets)
    adam_step(cp.v, grads, cp.adam_v, lr)
    return loss


# ---------------------------------------------------------------------------
# Advantages
# ---------------------------------------------------------------------------


@dataclass
class AdvantageRow:
    """Raw, normalized, and clipped advantages over one state's candidates."""

    raw: np.ndarray
    normalized: np.ndarray
    clipped: np.ndarray
    mean: float
    std: float


def _normalize_clip(raw: np.ndarray, clip_c: float, norm_eps: float) -> AdvantageRow:
    mean = float(np.mean(raw))
    std = float(np.std(raw))  # population convention
    normalized = (raw - mean) / (std + norm_eps)
    clipped = np.clip(normalized, -clip_c, clip_c)
    return AdvantageRow(raw=raw, normalized=normalized, clipped=clipped, mean=mean, std=std)


def advantage_rows(
    cp: CriticPair,
    features: np.ndarray,
    candidate_indices: list,
    clip_c: float,
    norm_eps: float = NORM_EPS,
    lagged: bool = False,
) -> list[AdvantageRow]:
    """Per-state advantage rows for a batch sharing one forward pass.

    ``lagged=True`` computes everything from the frozen target networks (the
    fully lagged policy used for value backups); otherwise the online critics
    are combined with the frozen value baseline.
    """
    q1_net = cp.q1_target if lagged else cp.q1
    q2_net = cp.q2_target if lagged else cp.q2
    q1, _ = mlp_forward(q1_net, features)
    q2, _ = mlp_forward(q2_net, features)
    vt, _ = mlp_forward(cp.v_target, features)
    qmin = np.minimum(q1, q2)
    rows = []
    for b, cand in enumerate(candidate_indices):
        raw = qmin[b, np.asarray(cand, dtype=np.int64)] - vt[b, 0]
        rows.append(_normalize_clip(raw, clip_c, norm_eps))
    return rows


def advantage_row(
    cp: CriticPair,
    feature: np.ndarray,
    candidates: np.ndarray,
    clip_c: float,
    norm_eps: float = NORM_EPS,
    lagged: bool = False,
) -> AdvantageRow:
    return advantage_rows(
        cp, np.atleast_2d(feature), [candidates], clip_c, norm_eps, lagged
    )[0]
