"""Finite-state continuous-time Markov chain primitives.

A policy over a discrete action set is represented here as a time-dependent
generator: for each source action ``i`` and time ``t`` in [0, 1] a vector of
nonnegative off-diagonal jump rates ``u(i -> j, t)``, with the diagonal entry
implied by the zero-row-sum convention ``u(i -> i) = -sum_{j != i} u(i -> j)``.

Simulation uses the explicit Euler scheme on a uniform grid with M sub-steps:
at each sub-step the chain jumps with probability ``lambda * dt`` (clamped to
one when the discretisation is too coarse, with the clamp counted so callers
can surface it as a diagnostic) and the jump target is drawn proportionally to
the off-diagonal rates.  ``exact_marginals`` integrates the forward equation
``dp/dt = p u`` densely and serves as the independent oracle the samplers are
tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ActionSpace",
    "RateRow",
    "PathRecord",
    "validate_distribution",
    "validate_rate_row",
    "exit_rate",
    "generator_row",
    "euler_step",
    "simulate",
    "simulate_batch",
    "exact_marginals",
]

# Off-diagonal rates as a function of (current action, time).
RateFn = Callable[[int, float], np.ndarray]
# Batched variant: (current actions (n,), time) -> (n, K) off-diagonal rates.
BatchRateFn = Callable[[np.ndarray, float], np.ndarray]
# Full generator (K, K) with zero row sums, as a function of time.
GeneratorFn = Callable[[float], np.ndarray]

DISTRIBUTION_ATOL = 1e-9


@dataclass(frozen=True)
class ActionSpace:
    """A finite action set ``{0, ..., n_actions - 1}``."""

    n_actions: int

    def __post_init__(self) -> None:
        if self.n_actions < 2:
            raise ValueError(f"need at least 2 actions, got {self.n_actions}")


@dataclass(frozen=True)
class RateRow:
    """One generator row: off-diagonal jump rates out of ``source`` at ``time``.

    ``rates`` has one entry per action; the entry at ``source`` must be zero
    (the diagonal is implied, see :func:`generator_row`).
    """

    source: int
    time: float
    rates: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=np.float64))


@dataclass
class PathRecord:
    """Trace of one Euler simulation: states at every sub-step boundary."""

    n_steps: int
    dt: float
    states: np.ndarray  # (n_steps + 1,) int
    jumps: np.ndarray  # (n_steps,) bool, True where a jump occurred
    clamp_count: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def terminal(self) -> int:
        return int(self.states[-1])


def validate_distribution(p: np.ndarray, n_actions: int | None = None) -> np.ndarray:
    """Check that ``p`` is a probability vector (within 1e-9 of unit mass)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"distribution must be 1-d, got shape {p.shape}")
    if n_actions is not None and p.shape[0] != n_actions:
        raise ValueError(f"expected length {n_actions}, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("distribution has non-finite entries")
    if np.any(p < 0.0):
        raise ValueError(f"distribution has negative entries (min {p.min()})")
    total = float(p.sum())
    if abs(total - 1.0) > DISTRIBUTION_ATOL:
        raise ValueError(f"distribution sums to {total!r}, not 1")
    return p


def validate_rate_row(row: RateRow, n_actions: int) -> None:
    """Raise ``ValueError`` unless ``row`` is a valid generator row."""
    if not 0 <= row.source < n_actions:
        raise ValueError(f"source {row.source} outside action space of size {n_actions}")
    if row.rates.shape != (n_actions,):
        raise ValueError(f"rates shape {row.rates.shape} != ({n_actions},)")
    if not np.all(np.isfinite(row.rates)):
        raise ValueError("rates contain non-finite entries")
    if np.any(row.rates < 0.0):
        raise ValueError(f"negative off-diagonal rate (min {row.rates.min()})")
    if row.rates[row.source] != 0.0:
        raise ValueError(
            f"rate at the source index must be 0, got {row.rates[row.source]}"
        )


def exit_rate(row: RateRow) -> float:
    """Total jump intensity out of the row's source action."""
    return float(row.rates.sum())


def generator_row(row: RateRow) -> np.ndarray:
    """Full generator row including the diagonal (negative exit rate)."""
    out = row.rates.copy()
    out[row.source] = -exit_rate(row)
    return out


def euler_step(
    rng: np.random.Generator, state: int, rates: np.ndarray, dt: float
) -> tuple[int, bool, bool]:
    """One Euler sub-step from ``state`` under off-diagonal ``rates``.

    Returns ``(next_state, jumped, clamped)``.  ``clamped`` is True when the
    jump probability ``lambda * dt`` exceeded one and had to be truncated,
    which means ``dt`` is too coarse for these rates.
    """
    lam = float(rates.sum())
    if lam <= 0.0:
        return state, False, False
    p_jump = lam * dt
    clamped = p_jump > 1.0
    if rng.random() < min(p_jump, 1.0):
        # Jump target drawn proportionally to the off-diagonal rates.
        target = int(rng.choice(rates.shape[0], p=rates / lam))
        return target, True, clamped
    return state, False, clamped


def simulate(
    rate_fn: RateFn,
    n_actions: int,
    n_steps: int,
    rng: np.random.Generator,
    x0: int | None = None,
) -> PathRecord:
    """Simulate one chain on the uniform grid ``t_m = m / n_steps``.

    ``x0`` defaults to a uniform draw over the action space, matching the
    generative convention used everywhere in this package.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    dt = 1.0 / n_steps
    state = int(rng.integers(n_actions)) if x0 is None else int(x0)
    states = np.empty(n_steps + 1, dtype=np.int64)
    jumps = np.zeros(n_steps, dtype=bool)
    states[0] = state
    clamp_count = 0
    for m in range(n_steps):
        rates = np.asarray(rate_fn(state, m * dt), dtype=np.float64)
        state, jumped, clamped = euler_step(rng, state, rates, dt)
        states[m + 1] = state
        jumps[m] = jumped
        clamp_count += int(clamped)
    return PathRecord(n_steps=n_steps, dt=dt, states=states, jumps=jumps, clamp_count=clamp_count)


def simulate_batch(
    rate_fn: BatchRateFn,
    n_actions: int,
    n_steps: int,
    n_chains: int,
    rng: np.random.Generator,
    x0: np.ndarray | None = None,
    keep_paths: bool = False,
) -> tuple[np.ndarray, int]:
    """Simulate ``n_chains`` independent chains in lockstep.

    ``rate_fn`` receives the vector of current actions and the sub-step time
    and must return an ``(n_chains, n_actions)`` array of off-diagonal rates
    (zero at each chain's own action).  Returns the terminal actions and the
    total number of clamped sub-steps across all chains; with ``keep_paths``
    the first element is instead the full ``(n_chains, n_steps + 1)`` state
    history.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    dt = 1.0 / n_steps
    if x0 is None:
        states = rng.integers(n_actions, size=n_chains)
    else:
        states = np.array(x0, dtype=np.int64)
        if states.shape != (n_chains,):
            raise ValueError(f"x0 shape {states.shape} != ({n_chains},)")
    history = np.zeros((n_chains, n_steps + 1), dtype=np.int64) if keep_paths else None
    if history is not None:
        history[:, 0] = states
    clamp_count = 0
    for m in range(n_steps):
        rates = np.asarray(rate_fn(states, m * dt), dtype=np.float64)
        lam = rates.sum(axis=1)
        p_jump = lam * dt
        clamp_count += int(np.count_nonzero(p_jump > 1.0))
        np.clip(p_jump, 0.0, 1.0, out=p_jump)
        jump = rng.random(n_chains) < p_jump
        # Inverse-CDF draw of the jump target for every chain; only the
        # jumping chains consume their draw.  Keeping the draw count fixed
        # per sub-step makes the stream layout independent of the outcome.
        u = rng.random(n_chains)
        if np.any(jump):
            cdf = np.cumsum(rates, axis=1)
            totals = cdf[:, -1].copy()
            totals[totals <= 0.0] = 1.0  # rows with lam == 0 never jump
            cdf /= totals[:, None]
            targets = (u[:, None] > cdf).sum(axis=1)
            np.clip(targets, 0, n_actions - 1, out=targets)
            states = np.where(jump, targets, states)
        if history is not None:
            history[:, m + 1] = states
    if history is not None:
        return history, clamp_count
    return states, clamp_count


def exact_marginals(
    generator_fn: GeneratorFn,
    p0: np.ndarray,
    t_end: float = 1.0,
    n_steps: int = 10_000,
) -> np.ndarray:
    """Integrate the forward equation ``dp/dt = p u_t`` with dense Euler steps.

    ``generator_fn(t)`` must return the full (K, K) generator (zero row sums).
    Mass drift per step is at the float64 roundoff level and is renormalised
    away after every step; negative excursions are clipped to zero first.
    """
    p = validate_distribution(p0).copy()
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    dt = t_end / n_steps
    for m in range(n_steps):
        q = np.asarray(generator_fn(m * dt), dtype=np.float64)
        p = p + dt * (p @ q)
        np.clip(p, 0.0, None, out=p)
        total = p.sum()
        if total <= 0.0:
            raise FloatingPointError("forward-equation mass collapsed to zero")
        p /= total
    return p
