"""Double-DQN baseline used by the comparative gridworld experiments.

Kept deliberately minimal: one Q network with a soft-updated target copy,
double-DQN targets (online argmax, target evaluate), epsilon-greedy
exploration with a linear anneal over the first half of the online steps, and
the same mixed replay as the main agent.  Greedy action selection breaks ties
toward the lowest index, so evaluation is deterministic given parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import AdamState, Mlp, adam_init, adam_step, clone_mlp, init_mlp, mlp_forward, soft_update
from .replay import critic_loss

__all__ = [
    "DqnAgent",
    "make_dqn",
    "dqn_td_target",
    "dqn_update",
    "greedy_action",
    "epsilon_greedy",
    "epsilon_schedule",
]

EPS_START = 1.0
EPS_END = 0.05


@dataclass
class DqnAgent:
    net: Mlp
    target: Mlp
    adam: AdamState


def make_dqn(in_dim: int, n_actions: int, rng: np.random.Generator, hidden: int = 256) -> DqnAgent:
    net = init_mlp(in_dim, n_actions, rng, hidden)
    return DqnAgent(net=net, target=clone_mlp(net), adam=adam_init(net))


def dqn_td_target(
    agent: DqnAgent,
    next_features: np.ndarray,
    rewards: np.ndarray,
    dones: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma * Q_target(s', argmax_a Q_online(s', a)) * (1 - done)."""
    q_online, _ = mlp_forward(agent.net, next_features)
    q_target, _ = mlp_forward(agent.target, next_features)
    best = np.argmax(q_online, axis=1)
    bootstrap = q_target[np.arange(q_target.shape[0]), best]
    return np.asarray(rewards) + gamma * bootstrap * (1.0 - np.asarray(dones, dtype=np.float64))


def dqn_update(
    agent: DqnAgent,
    features: np.ndarray,
    actions: np.ndarray,
    next_features: np.ndarray,
    rewards: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lr: float,
    tau: float,
) -> float:
    y = dqn_td_target(agent, next_features, rewards, dones, gamma)
    loss, grads = critic_loss(agent.net, features, actions, y)
    adam_step(agent.net, grads, agent.adam, lr)
    soft_update(agent.target, agent.net, tau)
    return loss


def greedy_action(agent: DqnAgent, feature: np.ndarray) -> int:
    q, _ = mlp_forward(agent.net, np.atleast_2d(feature))
    return int(np.argmax(q[0]))  # argmax takes the lowest index on ties


def epsilon_greedy(
    agent: DqnAgent,
    feature: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    n_actions = agent.net.out_dim
    if rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return greedy_action(agent, feature)


def epsilon_schedule(step: int, n_online_steps: int, start: float = EPS_START, end: float = EPS_END) -> float:
    """Linear anneal from ``start`` to ``end`` over the first half of the run."""
    horizon = max(n_online_steps // 2, 1)
    frac = min(step / horizon, 1.0)
    return start + (end - start) * frac
