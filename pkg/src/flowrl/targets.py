"""Candidate sets and the advantage-reweighted target policy.

A candidate set for a state is the union of terminal actions from rollouts
under the frozen reference generator (kept with their visit counts) and a
handful of uniform draws.  The reference policy smooths the rollout
frequencies; the target policy reweights it by exponentiated clipped
advantages and is zero off the candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .replay import NORM_EPS, CriticPair, advantage_row

__all__ = [
    "CandidateSet",
    "build_candidate_set",
    "smoothed_reference",
    "target_policy",
    "lagged_target_policy",
    "embed_full",
]

# Draw n rollout terminal actions for the state under consideration.
TerminalSampler = Callable[[int, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class CandidateSet:
    """Deduplicated action subset with rollout terminal counts."""

    indices: np.ndarray  # unique, sorted, int64
    counts: np.ndarray  # rollout terminals per index; 0 for uniform-only members

    def __post_init__(self):
        assert self.indices.shape == self.counts.shape
        assert np.all(np.diff(self.indices) > 0), "indices must be unique and sorted"

    def __len__(self) -> int:
        return int(self.indices.shape[0])


def build_candidate_set(
    sample_terminals: TerminalSampler,
    n_actions: int,
    n_roll: int,
    n_rand: int,
    rng: np.random.Generator,
    force_sampled: bool = False,
) -> CandidateSet:
    """Union of rollout terminals and uniform draws, deduplicated.

    When the action space is no larger than the rollout+uniform budget the
    whole space is enumerated directly (counts still come from the rollouts);
    ``force_sampled`` disables that shortcut for experiments where the sampled
    construction is the point.
    """
    if n_roll < 0 or n_rand < 0:
        raise ValueError("budgets must be nonnegative")
    if n_roll + n_rand == 0 and (force_sampled or n_actions > 0):
        raise ValueError("candidate budget is zero")
    terminals = (
        np.asarray(sample_terminals(n_roll, rng), dtype=np.int64)
        if n_roll > 0
        else np.zeros(0, dtype=np.int64)
    )
    if terminals.shape != (n_roll,):
        raise ValueError("terminal sampler returned wrong shape")
    counts_full = np.bincount(terminals, minlength=n_actions)
    if not force_sampled and n_actions <= n_roll + n_rand:
        indices = np.arange(n_actions, dtype=np.int64)
        return CandidateSet(indices=indices, counts=counts_full.astype(np.int64))
    uniform = rng.integers(n_actions, size=n_rand)
    indices = np.unique(np.concatenate([terminals, uniform]))
    return CandidateSet(indices=indices, counts=counts_full[indices].astype(np.int64))


def smoothed_reference(cand: CandidateSet, n_roll: int, epsilon: float) -> np.ndarray:
    """Rollout frequencies with additive smoothing, normalized over the set.

    Weight per candidate is count/n_roll + epsilon/|cand|; with no rollouts
    the reference degenerates to uniform over the candidates.
    """
    n = len(cand)
    if n == 0:
        raise ValueError("empty candidate set")
    if n_roll == 0:
        return np.full(n, 1.0 / n)
    w = cand.counts / n_roll + epsilon / n
    return w / w.sum()


def target_policy(ref_probs: np.ndarray, clipped_adv: np.ndarray, beta: float) -> np.ndarray:
    """Reference policy reweighted by exp(clipped advantage / beta).

    Shift-invariant in the advantages; the result sums to 1 over the
    candidate set it was given.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    ref_probs = np.asarray(ref_probs, dtype=np.float64)
    expo = np.asarray(clipped_adv, dtype=np.float64) / beta
    w = ref_probs * np.exp(expo - expo.max())
    total = w.sum()
    if total <= 0:
        raise ValueError("target policy has no mass; reference must be positive")
    return w / total


def lagged_target_policy(
    cp: CriticPair,
    feature: np.ndarray,
    cand: CandidateSet,
    ref_probs: np.ndarray,
    beta: float,
    clip_c: float,
    norm_eps: float = NORM_EPS,
) -> np.ndarray:
    """Target policy computed entirely from the frozen critic/value copies."""
    row = advantage_row(cp, feature, cand.indices, clip_c, norm_eps, lagged=True)
    return target_policy(ref_probs, row.clipped, beta)


def embed_full(probs: np.ndarray, indices: np.ndarray, n_actions: int) -> np.ndarray:
    """Expand candidate-set probabilities to a length-K vector, zero off-set."""
    out = np.zeros(n_actions)
    out[np.asarray(indices, dtype=np.int64)] = probs
    return out
