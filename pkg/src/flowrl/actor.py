"""CTMC rate network, flow-matching regression, and the path-space trust region.

The rate network maps (state features ++ one-hot current action ++ flow time)
to K logits; a softplus head makes the off-diagonal rates nonnegative and the
entry at the current action is structurally zero, so every output is a valid
generator row for any parameter setting.

Training combines two terms.  The flow-matching term regresses the learned
rates toward the independent-coupling target rates at a sampled flow time and
a source action drawn from the bridge marginal.  The trust-region term is a
path-wise KL surrogate against a frozen reference generator: one path is
simulated under the current rates, held fixed, and scored by the jump
log-ratios plus the holding-rate correction.  Gradients flow only through the
rate evaluations along the fixed path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import ctmc
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
)
from .replay import CriticPair, advantage_rows
from .targets import (
    CandidateSet,
    build_candidate_set,
    embed_full,
    smoothed_reference,
    target_policy,
)
from .transport import bridge_point, coupling_row, sample_flow_time

__all__ = [
    "RateNetwork",
    "FlowActor",
    "KlEstimate",
    "ActorLosses",
    "TargetPlan",
    "RATE_FLOOR",
    "init_rate_network",
    "clone_rate_network",
    "rate_rows",
    "rate_rows_backward",
    "rate_row",
    "sample_terminal_actions",
    "sample_kl_paths",
    "sample_actions",
    "dfm_loss",
    "paths_kl_loss",
    "path_kl_loss",
    "make_actor",
    "refresh_reference",
    "actor_step",
    "build_target_plan",
]

RATE_FLOOR = 1e-8


@dataclass
class RateNetwork:
    """MLP over (features ++ one-hot action ++ t) producing off-diagonal rates."""

    mlp: Mlp
    feat_dim: int
    n_actions: int


def init_rate_network(
    feat_dim: int,
    n_actions: int,
    rng: np.random.Generator,
    hidden: int = 256,
    zero: bool = False,
) -> RateNetwork:
    mlp = init_mlp(feat_dim + n_actions + 1, n_actions, rng, hidden, zero=zero)
    return RateNetwork(mlp=mlp, feat_dim=feat_dim, n_actions=n_actions)


def clone_rate_network(net: RateNetwork) -> RateNetwork:
    return RateNetwork(mlp=clone_mlp(net.mlp), feat_dim=net.feat_dim, n_actions=net.n_actions)


def _rate_inputs(
    net: RateNetwork,
    features: np.ndarray,
    actions: np.ndarray,
    ts: np.ndarray,
) -> np.ndarray:
    n = features.shape[0]
    x = np.zeros((n, net.feat_dim + net.n_actions + 1))
    x[:, : net.feat_dim] = features
    x[np.arange(n), net.feat_dim + actions] = 1.0
    x[:, -1] = ts
    return x


def rate_rows(
    net: RateNetwork,
    features: np.ndarray,
    actions: np.ndarray,
    ts: np.ndarray,
) -> tuple[np.ndarray, tuple]:
    """Off-diagonal rate rows for a batch of (state, current action, t).

    Rates are softplus(logits) with each row's own-action entry zeroed.
    Returns the rates and a cache for ``rate_rows_backward``.
    """
    actions = np.asarray(actions, dtype=np.int64)
    ts = np.asarray(ts, dtype=np.float64)
    x = _rate_inputs(net, features, actions, ts)
    logits, cache = mlp_forward(net.mlp, x)
    rates = np.logaddexp(0.0, logits)
    rates[np.arange(rates.shape[0]), actions] = 0.0
    return rates, (cache, logits, actions)


def rate_rows_backward(net: RateNetwork, cache: tuple, grad_rates: np.ndarray) -> MlpGrads:
    """Backprop ``sum(grad_rates * rates)`` through the softplus head."""
    mlp_cache, logits, actions = cache
    grad_logits = grad_rates * expit(logits)
    grad_logits[np.arange(grad_logits.shape[0]), actions] = 0.0
    return mlp_backward(net.mlp, mlp_cache, grad_logits)


def rate_row(net: RateNetwork, feature: np.ndarray, action: int, t: float) -> ctmc.RateRow:
    """Single validated rate row (convenience wrapper over the batch path)."""
    rates, _ = rate_rows(
        net,
        np.atleast_2d(np.asarray(feature, dtype=np.float64)),
        np.array([action]),
        np.array([t]),
    )
    row = ctmc.RateRow(source=action, time=t, rates=rates[0])
    ctmc.validate_rate_row(row, net.n_actions)
    return row


def _lockstep_rate_fn(net: RateNetwork, features: np.ndarray):
    def fn(states: np.ndarray, t: float) -> np.ndarray:
        return rate_rows(net, features, states, np.full(states.shape[0], t))[0]

    return fn


def sample_terminal_actions(
    net: RateNetwork,
    features: np.ndarray,
    n_paths: int,
    n_steps: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Terminal actions of ``n_paths`` rollouts per state, simulated in lockstep.

    Returns a (B, n_paths) array and the clamped-sub-step count.
    """
    b = features.shape[0]
    tiled = np.repeat(features, n_paths, axis=0)
    terminals, clamps = ctmc.simulate_batch(
        _lockstep_rate_fn(net, tiled), net.n_actions, n_steps, b * n_paths, rng
    )
    return terminals.reshape(b, n_paths), clamps


def sample_kl_paths(
    net: RateNetwork,
    features: np.ndarray,
    n_steps: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """One full path per state under the current rates; (B, n_steps+1) states."""
    b = features.shape[0]
    histories, clamps = ctmc.simulate_batch(
        _lockstep_rate_fn(net, features), net.n_actions, n_steps, b, rng, keep_paths=True
    )
    return histories, clamps


def sample_actions(
    net: RateNetwork,
    features: np.ndarray,
    n_steps: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Draw one action per state by simulating the generator from t=0 to 1."""
    b = features.shape[0]
    return ctmc.simulate_batch(
        _lockstep_rate_fn(net, features), net.n_actions, n_steps, b, rng
    )


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def dfm_loss(
    net: RateNetwork,
    features: np.ndarray,
    sources: np.ndarray,
    ts: np.ndarray,
    target_rows: np.ndarray,
) -> tuple[float, MlpGrads]:
    """Mean squared rate regression against the coupling targets.

    Per sample the sum runs over every action except the source, whose entry
    is structurally zero on both sides.
    """
    n = features.shape[0]
    rates, cache = rate_rows(net, features, sources, ts)
    diff = rates - np.asarray(target_rows, dtype=np.float64)
    diff[np.arange(n), sources] = 0.0
    loss = float(np.sum(diff**2) / n)
    grads = rate_rows_backward(net, cache, 2.0 * diff / n)
    return loss, grads


@dataclass
class KlEstimate:
    """Path-KL surrogate split into its jump and holding contributions."""

    jump_term: float
    holding_term: float

    @property
    def total(self) -> float:
        return self.jump_term + self.holding_term


def _paths_kl_core(
    net: RateNetwork,
    ref: RateNetwork,
    features: np.ndarray,
    histories: np.ndarray,
) -> tuple[list[KlEstimate], np.ndarray, tuple, np.ndarray, np.ndarray, np.ndarray]:
    b, m_plus_1 = histories.shape
    m = m_plus_1 - 1
    dt = 1.0 / m
    feats = np.repeat(features, m, axis=0)
    cur = histories[:, :m].reshape(-1)
    nxt = histories[:, 1:].reshape(-1)
    ts = np.tile(np.arange(m) * dt, b)
    rates, cache = rate_rows(net, feats, cur, ts)
    rates_ref, _ = rate_rows(ref, feats, cur, ts)
    lam = rates.sum(axis=1)
    lam_ref = rates_ref.sum(axis=1)
    holding_rows = (lam_ref - lam) * dt
    rows = np.arange(b * m)
    jumped = nxt != cur
    u_cur = np.maximum(rates[rows, nxt], RATE_FLOOR)
    u_ref = np.maximum(rates_ref[rows, nxt], RATE_FLOOR)
    jump_rows = np.where(jumped, np.log(u_cur) - np.log(u_ref), 0.0)
    holding_per_path = holding_rows.reshape(b, m).sum(axis=1)
    jump_per_path = jump_rows.reshape(b, m).sum(axis=1)
    estimates = [
        KlEstimate(jump_term=float(j), holding_term=float(h))
        for j, h in zip(jump_per_path, holding_per_path)
    ]
    return estimates, rates, cache, rows, nxt, jumped


def paths_kl_estimates(
    net: RateNetwork,
    ref: RateNetwork,
    features: np.ndarray,
    histories: np.ndarray,
) -> list[KlEstimate]:
    """Estimator values only, for Monte Carlo use (no gradient pass)."""
    return _paths_kl_core(net, ref, features, histories)[0]


def paths_kl_loss(
    net: RateNetwork,
    ref: RateNetwork,
    features: np.ndarray,
    histories: np.ndarray,
) -> tuple[list[KlEstimate], MlpGrads]:
    """KL surrogate of fixed paths, one per state, plus gradients of the mean.

    ``histories`` is (B, M+1) as produced by ``sample_kl_paths``; the paths
    are treated as constants, so gradients flow only through the current
    network's rate evaluations along them.  Rates below 1e-8 are floored
    inside the jump logarithms (on both sides, preserving the exact-zero
    identity for parameter-identical networks) and floored entries carry no
    gradient.
    """
    estimates, rates, cache, rows, nxt, jumped = _paths_kl_core(net, ref, features, histories)
    b, m_plus_1 = histories.shape
    dt = 1.0 / (m_plus_1 - 1)
    grad_rates = np.full_like(rates, -dt / b)
    live = jumped & (rates[rows, nxt] > RATE_FLOOR)
    grad_rates[rows[live], nxt[live]] += 1.0 / (b * rates[rows[live], nxt[live]])
    grads = rate_rows_backward(net, cache, grad_rates)
    return estimates, grads


def path_kl_loss(
    net: RateNetwork,
    ref: RateNetwork,
    feature: np.ndarray,
    history: np.ndarray,
) -> tuple[KlEstimate, MlpGrads]:
    """Single-path convenience wrapper around ``paths_kl_loss``."""
    estimates, grads = paths_kl_loss(
        net, ref, np.atleast_2d(np.asarray(feature, dtype=np.float64)), np.atleast_2d(history)
    )
    return estimates[0], grads


def _add_scaled(a: MlpGrads, b: MlpGrads, scale: float) -> MlpGrads:
    return MlpGrads(*[x + scale * y for x, y in zip(a.arrays(), b.arrays())])


# ---------------------------------------------------------------------------
# Actor
# ---------------------------------------------------------------------------


@dataclass
class FlowActor:
    net: RateNetwork
    ref: RateNetwork
    adam: AdamState


def make_actor(
    feat_dim: int,
    n_actions: int,
    rng: np.random.Generator,
    hidden: int = 256,
) -> FlowActor:
    net = init_rate_network(feat_dim, n_actions, rng, hidden)
    return FlowActor(net=net, ref=clone_rate_network(net), adam=adam_init(net.mlp))


def refresh_reference(actor: FlowActor) -> None:
    """Snapshot the current rates as the new trust-region anchor."""
    actor.ref = clone_rate_network(actor.net)


@dataclass
class ActorLosses:
    dfm: float
    kl: float
    clamped_steps: int


def actor_step(
    actor: FlowActor,
    features: np.ndarray,
    targets_full: np.ndarray,
    alpha: float,
    delta: float,
    n_steps: int,
    rng: np.random.Generator,
    lr: float,
) -> ActorLosses:
    """One optimizer step on the combined objective with injected targets.

    ``targets_full`` holds one length-K target policy per state (zeros off
    the candidate set).  Per state a flow time is drawn from U[0, 1-delta], a
    source action from the bridge marginal, and the coupling row at that
    point becomes the regression target.  With ``alpha > 0`` a fresh path is
    simulated per state for the KL surrogate.
    """
    b = features.shape[0]
    k = actor.net.n_actions
    ts = np.array([sample_flow_time(rng, delta) for _ in range(b)])
    sources = np.zeros(b, dtype=np.int64)
    target_rows = np.zeros((b, k))
    for i in range(b):
        point = bridge_point(targets_full[i], ts[i])
        sources[i] = rng.choice(k, p=point.p)
        target_rows[i] = coupling_row(point, int(sources[i]))
    l_dfm, grads = dfm_loss(actor.net, features, sources, ts, target_rows)
    l_kl = 0.0
    clamps = 0
    if alpha > 0.0:
        histories, clamps = sample_kl_paths(actor.net, features, n_steps, rng)
        estimates, kl_grads = paths_kl_loss(actor.net, actor.ref, features, histories)
        l_kl = float(np.mean([e.total for e in estimates]))
        grads = _add_scaled(grads, kl_grads, alpha)
    adam_step(actor.net.mlp, grads, actor.adam, lr)
    return ActorLosses(dfm=l_dfm, kl=l_kl, clamped_steps=clamps)


# ---------------------------------------------------------------------------
# Candidate/target assembly for a batch of states
# ---------------------------------------------------------------------------


@dataclass
class TargetPlan:
    """Everything the value and actor updates need for one state batch."""

    candidate_sets: list[CandidateSet]
    references: list[np.ndarray]
    target_full: np.ndarray  # (B, K), online-critic advantages
    lagged_full: np.ndarray  # (B, K), frozen-network advantages
    clamped_steps: int


def build_target_plan(
    actor: FlowActor,
    cp: CriticPair,
    features: np.ndarray,
    n_roll: int,
    n_rand: int,
    n_steps: int,
    smooth_eps: float,
    beta: float,
    clip_c: float,
    rng: np.random.Generator,
    force_sampled: bool = False,
) -> TargetPlan:
    """Candidate sets, references, and both target policies for a batch.

    Rollouts for every state run in one lockstep simulation under the frozen
    reference generator; the per-state candidate builder then consumes its
    pre-drawn terminal row.
    """
    b = features.shape[0]
    k = actor.net.n_actions
    clamps = 0
    if n_roll > 0:
        terminals, clamps = sample_terminal_actions(actor.ref, features, n_roll, n_steps, rng)
    else:
        terminals = np.zeros((b, 0), dtype=np.int64)
    cands = []
    for i in range(b):
        row = terminals[i]
        cands.append(
            build_candidate_set(
                lambda n, _rng, row=row: row[:n], k, n_roll, n_rand, rng, force_sampled
            )
        )
    refs = [smoothed_reference(c, n_roll, smooth_eps) for c in cands]
    indices = [c.indices for c in cands]
    online_rows = advantage_rows(cp, features, indices, clip_c)
    lagged_rows = advantage_rows(cp, features, indices, clip_c, lagged=True)
    target_full = np.zeros((b, k))
    lagged_full = np.zeros((b, k))
    for i in range(b):
        target_full[i] = embed_full(
            target_policy(refs[i], online_rows[i].clipped, beta), indices[i], k
        )
        lagged_full[i] = embed_full(
            target_policy(refs[i], lagged_rows[i].clipped, beta), indices[i], k
        )
    return TargetPlan(
        candidate_sets=cands,
        references=refs,
        target_full=target_full,
        lagged_full=lagged_full,
        clamped_steps=clamps,
    )
