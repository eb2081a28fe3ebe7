"""Executable verification of the guarantees the training loop leans on.

Each check pairs an analytic statement with an independent numerical route:
closed forms against Monte Carlo, batched integrators against dense ones,
backprop against finite differences.  All randomness is seeded, and every
failure records enough detail to reproduce the offending instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ctmc
from .actor import (
    clone_rate_network,
    dfm_loss,
    init_rate_network,
    paths_kl_estimates,
    paths_kl_loss,
    rate_rows,
    sample_kl_paths,
    _add_scaled,
    _rate_inputs,
)
from .nets import MlpGrads, init_mlp, numeric_grad
from .replay import critic_loss, value_loss
from .targets import build_candidate_set
from .transport import (
    bridge_point,
    coupling_matrix,
    expected_excluded_l1,
    integrate_coupling_batch,
    restrict_renormalize,
    stability_lhs_rhs,
    uniform_source,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    trials: int
    failures: int
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.trials} trials, {self.failures} failures"


def check_mass(seed: int = 0, n_trials: int = 1000) -> CheckResult:
    """Evolving the uniform source under the coupling rates reaches the target.

    Random targets over support sizes 2..16 are integrated to t = 1 - 1e-3
    with a fine Euler grid; the terminal marginal must sit within 1e-2 of the
    target in L1.  Ten instances are re-integrated through the dense K x K
    generator as an independent route and must agree with the batched
    integrator to 1e-8.
    """
    rng = np.random.default_rng(seed)
    t_end = 1.0 - 1e-3
    n_steps = 10_000
    tol = 1e-2
    sizes = rng.integers(2, 17, size=n_trials)
    worst = 0.0
    failures = 0
    first_failure: dict | None = None
    for k in np.unique(sizes):
        group = int(np.count_nonzero(sizes == k))
        half = group // 2
        targets = np.concatenate(
            [
                rng.dirichlet(np.ones(int(k)), size=half),
                rng.dirichlet(np.full(int(k), 0.4), size=group - half),
            ]
        )
        evolved = integrate_coupling_batch(targets, t_end, n_steps)
        gaps = np.abs(evolved - targets).sum(axis=1)
        worst = max(worst, float(gaps.max()))
        bad = np.flatnonzero(gaps > tol)
        failures += bad.size
        if bad.size and first_failure is None:
            first_failure = {
                "k": int(k),
                "l1": float(gaps[bad[0]]),
                "target": targets[bad[0]].tolist(),
            }
    route_gap = 0.0
    n_spots = 10
    for _ in range(n_spots):
        k = int(rng.integers(2, 17))
        target = rng.dirichlet(np.ones(k))
        fast = integrate_coupling_batch(target[None, :], t_end, n_steps)[0]
        dense = ctmc.exact_marginals(
            lambda t: coupling_matrix(bridge_point(target, t)),
            uniform_source(k),
            t_end,
            n_steps,
        )
        route_gap = max(route_gap, float(np.abs(fast - dense).sum()))
    if route_gap > 1e-8:
        failures += 1
    details = {
        "seed": seed,
        "tolerance": tol,
        "worst_l1": worst,
        "integrator_route_gap": route_gap,
    }
    if first_failure is not None:
        details["first_failure"] = first_failure
    return CheckResult("mass", failures == 0, n_trials + n_spots, failures, details)


def check_coverage(seed: int = 0, n_constructions: int = 100_000) -> CheckResult:
    """Candidate truncation loses exactly the predicted L1 mass on average.

    A single-rollout fixture on four actions is fully deterministic (every
    construction keeps one action and drops three quarters of a uniform
    target, an L1 gap of exactly 1.5) and runs through the real candidate
    builder fed by the chain simulator.  A skewed eight-action instance is
    then sampled in bulk and its mean L1 gap compared with the closed form,
    and the closed form itself must shrink monotonically in both budgets.
    """
    rng = np.random.default_rng(seed)
    failures = 0
    details: dict = {"seed": seed}

    k = 4
    uniform = np.full(k, 0.25)
    exact = expected_excluded_l1(uniform, uniform, 1, 0)
    if exact != 1.5:
        failures += 1
    # zero rates: one Euler sub-step, chains stay at their uniform start, so
    # the terminals are honest single-rollout draws under a uniform reference
    terminals, _ = ctmc.simulate_batch(
        lambda states, t: np.zeros((states.shape[0], k)), k, 1, n_constructions, rng
    )
    kept = np.zeros((n_constructions, k), dtype=bool)
    kept[np.arange(n_constructions), terminals] = True
    excluded = np.where(kept, 0.0, uniform[None, :]).sum(axis=1)
    fixture_l1 = np.abs(
        np.where(kept, uniform[None, :] / (1.0 - excluded)[:, None], 0.0)
        - uniform[None, :]
    ).sum(axis=1)
    fixture_mc = float(fixture_l1.mean())
    if abs(fixture_mc - exact) / exact > 0.01:
        failures += 1
    fixture_dev = 0.0
    for term in terminals[:2000]:
        cand = build_candidate_set(
            lambda m, _rng, a=int(term): np.full(m, a, dtype=np.int64),
            k,
            n_roll=1,
            n_rand=0,
            rng=rng,
            force_sampled=True,
        )
        restricted = restrict_renormalize(uniform, cand.indices)
        l1 = float(np.abs(restricted - uniform).sum())
        fixture_dev = max(fixture_dev, abs(l1 - exact))
    if fixture_dev > 1e-12:
        failures += 1
    details["fixture_exact"] = exact
    details["fixture_mc"] = fixture_mc
    details["fixture_max_dev"] = fixture_dev

    k2, n_roll, n_rand = 8, 3, 2
    target = rng.dirichlet(np.ones(k2))
    reference = rng.dirichlet(np.ones(k2))
    bound = expected_excluded_l1(target, reference, n_roll, n_rand)
    roll = rng.choice(k2, size=(n_constructions, n_roll), p=reference)
    unif = rng.integers(k2, size=(n_constructions, n_rand))
    draws = np.concatenate([roll, unif], axis=1)
    member = np.zeros((n_constructions, k2), dtype=bool)
    member[np.arange(n_constructions)[:, None], draws] = True
    eps = np.where(member, 0.0, target[None, :]).sum(axis=1)
    restricted_all = np.where(member, target[None, :] / (1.0 - eps)[:, None], 0.0)
    l1_all = np.abs(restricted_all - target[None, :]).sum(axis=1)
    mc = float(l1_all.mean())
    se = float(l1_all.std(ddof=1) / math.sqrt(n_constructions))
    if abs(mc - bound) > 4.0 * se + 1e-9:
        failures += 1
    details.update({"analytic": bound, "mc": mc, "mc_se": se})

    # tie the vectorised L1 to the library construction on spot instances
    tie_dev = 0.0
    for i in range(50):
        cand = build_candidate_set(
            lambda m, _rng, row=roll[i]: row[:m].astype(np.int64),
            k2,
            n_roll=n_roll,
            n_rand=n_rand,
            rng=rng,
            force_sampled=True,
        )
        via_lib = float(np.abs(restrict_renormalize(target, cand.indices) - target).sum())
        mem = np.zeros(k2, dtype=bool)
        mem[cand.indices] = True
        e = float(target[~mem].sum())
        via_vec = float(np.abs(np.where(mem, target / (1.0 - e), 0.0) - target).sum())
        tie_dev = max(tie_dev, abs(via_lib - via_vec))
    if tie_dev > 1e-12:
        failures += 1
    details["route_tie_dev"] = tie_dev

    grid = np.array(
        [
            [expected_excluded_l1(target, reference, i, j) for j in range(5)]
            for i in range(5)
        ]
    )
    monotone = bool(
        np.all(np.diff(grid, axis=0) <= 1e-12) and np.all(np.diff(grid, axis=1) <= 1e-12)
    )
    if not monotone:
        failures += 1
    details["budget_monotone"] = monotone
    trials = 2 * n_constructions + 2050
    return CheckResult("coverage", failures == 0, trials, failures, details)


def check_stability(seed: int = 0, n_trials: int = 1000) -> CheckResult:
    """The truncated-target coupling rates stay within the certified bound.

    Random targets, candidate subsets, and flow times are drawn until the
    bridge-marginal and velocity-mass floors hold (violations raise and are
    resampled); on every admissible instance the worst-row L1 distance
    between the truncated and full coupling generators must not exceed the
    bound proportional to the L1 gap of the targets.
    """
    rng = np.random.default_rng(seed)
    p_floor = 0.05
    z_floor = 0.05
    failures = 0
    resamples = 0
    worst_ratio = 0.0
    first_failure: dict | None = None
    for _ in range(n_trials):
        for _attempt in range(500):
            k = int(rng.integers(3, 9))
            alpha = float(rng.uniform(0.5, 2.5))
            target = rng.dirichlet(np.full(k, alpha))
            size = int(rng.integers(1, k))
            cand = np.sort(rng.choice(k, size=size, replace=False))
            t = float(rng.uniform(0.05, 1.0 - p_floor * k - 0.02))
            try:
                lhs, rhs = stability_lhs_rhs(target, cand, t, p_floor, z_floor)
            except ValueError:
                resamples += 1
                continue
            break
        else:
            raise RuntimeError("no floor-compatible instance found in 500 draws")
        if rhs > 0.0:
            worst_ratio = max(worst_ratio, lhs / rhs)
        if lhs > rhs + 1e-12:
            failures += 1
            if first_failure is None:
                first_failure = {
                    "k": k,
                    "t": t,
                    "lhs": lhs,
                    "rhs": rhs,
                    "candidates": cand.tolist(),
                    "target": target.tolist(),
                }
    details = {
        "seed": seed,
        "p_floor": p_floor,
        "z_floor": z_floor,
        "resamples": resamples,
        "worst_lhs_over_rhs": worst_ratio,
    }
    if first_failure is not None:
        details["first_failure"] = first_failure
    return CheckResult("stability", failures == 0, n_trials, failures, details)


def check_kl(seed: int = 0, n_paths: int = 100_000) -> CheckResult:
    """The path divergence estimator matches closed forms it should match.

    Identical networks give exactly zero, jump and holding terms separately.
    A two-state fixture with constant rates 1.0 (current) and 0.5 (reference)
    has divergence log 2 - 1/2 per unit time; the estimator's expectation is
    recovered twice, by exact enumeration of all three-sub-step paths and by
    Monte Carlo within four standard errors.
    """
    rng = np.random.default_rng(seed)
    failures = 0
    details: dict = {"seed": seed}

    net = init_rate_network(3, 5, rng, hidden=32)
    twin = clone_rate_network(net)
    feats = rng.normal(0.0, 1.0, (20, 3))
    histories, _ = sample_kl_paths(net, feats, 10, rng)
    ests = paths_kl_estimates(net, twin, feats, histories)
    self_dev = max(max(abs(e.jump_term), abs(e.holding_term)) for e in ests)
    if self_dev != 0.0:
        failures += 1
    details["self_divergence"] = self_dev

    m = 3
    theta = init_rate_network(2, 2, rng, hidden=8, zero=True)
    theta.mlp.b3[:] = math.log(math.e - 1.0)  # softplus -> 1.0
    ref = clone_rate_network(theta)
    ref.mlp.b3[:] = math.log(math.exp(0.5) - 1.0)  # softplus -> 0.5
    feat0 = np.zeros((1, 2))
    row_theta, _ = rate_rows(theta, feat0, np.array([0]), np.array([0.0]))
    row_ref, _ = rate_rows(ref, feat0, np.array([0]), np.array([0.0]))
    rate_dev = max(abs(float(row_theta[0, 1]) - 1.0), abs(float(row_ref[0, 1]) - 0.5))
    if rate_dev > 1e-12:
        failures += 1
    details["fixture_rate_dev"] = rate_dev

    exact = math.log(2.0) - 0.5
    patterns = np.array([[(idx >> s) & 1 for s in range(m)] for idx in range(2**m)])
    hist = np.zeros((2**m, m + 1), dtype=np.int64)
    for s in range(m):
        hist[:, s + 1] = hist[:, s] ^ patterns[:, s]
    n_jumps = patterns.sum(axis=1)
    probs = (1.0 / 3.0) ** n_jumps * (2.0 / 3.0) ** (m - n_jumps)
    feats_enum = np.zeros((2**m, 2))
    totals = np.array([e.total for e in paths_kl_estimates(theta, ref, feats_enum, hist)])
    enumerated = float(probs @ totals)
    if abs(enumerated - exact) > 1e-12:
        failures += 1

    mc_feats = np.zeros((n_paths, 2))
    mc_hist, clamps = sample_kl_paths(theta, mc_feats, m, rng)
    mc_totals = np.array(
        [e.total for e in paths_kl_estimates(theta, ref, mc_feats, mc_hist)]
    )
    mc = float(mc_totals.mean())
    se = float(mc_totals.std(ddof=1) / math.sqrt(n_paths))
    if abs(mc - enumerated) > 3.0 * se:
        failures += 1
    if clamps != 0:  # jump probability is 1/3 per sub-step, never clamped
        failures += 1
    details.update({"exact": exact, "enumerated": enumerated, "mc": mc, "mc_se": se})
    trials = len(ests) + 2**m + n_paths
    return CheckResult("kl", failures == 0, trials, failures, details)


def check_euler(seed: int = 0, n_chains: int = 1_000_000) -> CheckResult:
    """The chain simulator converges to the exponential law as steps grow.

    A two-state absorbing chain with rate 1/2 has exact absorption mass
    1 - exp(-1/2) at time one.  The simulator's own discrete law at M steps
    is 1 - (1 - 1/(2M))^M; the empirical mass must land within four standard
    errors of that law, within 1e-2 of the continuous truth, and the law's
    error must shrink when M doubles from 100 to 200.
    """
    rng = np.random.default_rng(seed)
    rate = 0.5
    truth = 1.0 - math.exp(-rate)
    failures = 0
    details: dict = {"seed": seed, "true_mass": truth}

    def rate_fn(states: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros((states.shape[0], 2))
        out[:, 1] = np.where(states == 0, rate, 0.0)
        return out

    x0 = np.zeros(n_chains, dtype=np.int64)
    law_err: dict[int, float] = {}
    for m in (100, 200):
        terminals, clamps = ctmc.simulate_batch(rate_fn, 2, m, n_chains, rng, x0=x0)
        p_hat = float(terminals.mean())
        law = 1.0 - (1.0 - rate / m) ** m
        se = math.sqrt(law * (1.0 - law) / n_chains)
        law_err[m] = abs(law - truth)
        if abs(p_hat - truth) > 1e-2:
            failures += 1
        if abs(p_hat - law) > 4.0 * se:
            failures += 1
        if clamps != 0:
            failures += 1
        details[f"mass_{m}"] = p_hat
        details[f"law_{m}"] = law
        details[f"se_{m}"] = se
    if not law_err[200] < law_err[100]:
        failures += 1
    details["law_err_100"] = law_err[100]
    details["law_err_200"] = law_err[200]
    return CheckResult("euler", failures == 0, 2 * n_chains, failures, details)


def _flat_grads(grads: MlpGrads) -> np.ndarray:
    return np.concatenate([a.ravel() for a in grads.arrays()])


def _max_rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-6)
    return float((np.abs(analytic - fd) / scale).max())


def check_gradients(seed: int = 0, n_instances: int = 10) -> CheckResult:
    """Backprop agrees with central finite differences on every loss head.

    Ten random small networks per loss: the twin-critic TD head, the value
    regression, the rate-matching loss, the path-divergence surrogate on a
    frozen path set, and their weighted combination.  Element-wise relative
    error against a 1e-5 central difference must stay below 1e-4.
    """
    rng = np.random.default_rng(seed)
    tol = 1e-4
    failures = 0
    worst: dict[str, float] = {}

    def record(kind: str, analytic: MlpGrads, fd: np.ndarray) -> None:
        nonlocal failures
        err = _max_rel_err(_flat_grads(analytic), fd)
        worst[kind] = max(worst.get(kind, 0.0), err)
        if err > tol:
            failures += 1

    def jitter(mlp) -> None:
        # keep pre-activations off the ReLU kink, where central differences
        # and the subgradient convention disagree by construction
        mlp.b1 += rng.normal(scale=0.3, size=mlp.b1.shape)
        mlp.b2 += rng.normal(scale=0.3, size=mlp.b2.shape)

    def kink_margin(mlp, x: np.ndarray) -> float:
        z1 = x @ mlp.w1 + mlp.b1
        z2 = np.maximum(z1, 0.0) @ mlp.w2 + mlp.b2
        return float(min(np.abs(z1).min(), np.abs(z2).min()))

    # Instances whose pre-activations sit within reach of the 1e-5 difference
    # step are redrawn; the analytic subgradient is fine there, the finite
    # difference is not.
    clearance = 1e-3

    for _ in range(n_instances):
        while True:
            q = init_mlp(4, 3, rng, hidden=16)
            jitter(q)
            f = rng.normal(0.0, 1.0, (6, 4))
            if kink_margin(q, f) > clearance:
                break
        acts = rng.integers(3, size=6)
        tds = rng.normal(0.0, 1.0, 6)
        _, qg = critic_loss(q, f, acts, tds)
        record("critic", qg, numeric_grad(lambda: critic_loss(q, f, acts, tds)[0], q))

        while True:
            v = init_mlp(4, 1, rng, hidden=16)
            jitter(v)
            if kink_margin(v, f) > clearance:
                break
        vt = rng.normal(0.0, 1.0, 6)
        _, vg = value_loss(v, f, vt)
        record("value", vg, numeric_grad(lambda: value_loss(v, f, vt)[0], v))

        n_sub = 5
        while True:
            rnet = init_rate_network(3, 4, rng, hidden=16)
            jitter(rnet.mlp)
            rf = rng.normal(0.0, 1.0, (5, 3))
            src = rng.integers(4, size=5)
            ts = rng.uniform(0.0, 0.95, 5)
            kf = rng.normal(0.0, 1.0, (4, 3))
            hist, _ = sample_kl_paths(rnet, kf, n_sub, rng)
            dfm_x = _rate_inputs(rnet, rf, src, ts)
            kl_x = _rate_inputs(
                rnet,
                np.repeat(kf, n_sub, axis=0),
                hist[:, :-1].reshape(-1),
                np.tile(np.arange(n_sub) / n_sub, kf.shape[0]),
            )
            if min(kink_margin(rnet.mlp, dfm_x), kink_margin(rnet.mlp, kl_x)) > clearance:
                break
        rows = rng.uniform(0.0, 2.0, (5, 4))
        _, dg = dfm_loss(rnet, rf, src, ts, rows)
        record(
            "rate_matching",
            dg,
            numeric_grad(lambda: dfm_loss(rnet, rf, src, ts, rows)[0], rnet.mlp),
        )

        ref = init_rate_network(3, 4, rng, hidden=16)

        def kl_scalar() -> float:
            ests = paths_kl_estimates(rnet, ref, kf, hist)
            return float(np.mean([e.total for e in ests]))

        _, kg = paths_kl_loss(rnet, ref, kf, hist)
        record("divergence", kg, numeric_grad(kl_scalar, rnet.mlp))

        alpha = 0.37
        record(
            "combined",
            _add_scaled(dg, kg, alpha),
            numeric_grad(
                lambda: dfm_loss(rnet, rf, src, ts, rows)[0] + alpha * kl_scalar(),
                rnet.mlp,
            ),
        )

    details = {"seed": seed, "tolerance": tol, "worst_rel_err": worst}
    return CheckResult("gradients", failures == 0, 5 * n_instances, failures, details)


CHECK_ORDER = ("mass", "coverage", "stability", "kl", "euler", "gradients")

_CHECK_FNS: dict[str, Callable[[int], CheckResult]] = {
    "mass": check_mass,
    "coverage": check_coverage,
    "stability": check_stability,
    "kl": check_kl,
    "euler": check_euler,
    "gradients": check_gradients,
}


def run_all(seed: int = 0, names: tuple[str, ...] = CHECK_ORDER) -> list[CheckResult]:
    """Run the named verification suites, each on its own derived seed."""
    unknown = [n for n in names if n not in _CHECK_FNS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    children = np.random.SeedSequence(seed).spawn(len(CHECK_ORDER))
    derived = {
        name: int(child.generate_state(1)[0])
        for name, child in zip(CHECK_ORDER, children)
    }
    return [_CHECK_FNS[name](derived[name]) for name in names]
