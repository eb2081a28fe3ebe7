"""Run configuration, seeding, metrics, the training loops, and sweeps.

One run is a sequential pipeline: collect (or load) the offline dataset,
pretrain critics and the reference generator, fine-tune online, evaluate.
A master seed splits into five named streams (env, agent, candidate, kl,
eval) so ablations perturb only the randomness they are about; identical
config and seed reproduce the metrics file byte for byte.

The per-step loop follows the combined procedure exactly: environment
interaction with an action sampled from the current generator, a mixed
offline/online minibatch, critic update, value update under the lagged
candidate policy, candidate/target construction and one actor step per state
batch, soft target updates, and a periodic reference refresh.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .actor import (
    FlowActor,
    RateNetwork,
    actor_step,
    build_target_plan,
    clone_rate_network,
    make_actor,
    refresh_reference,
    sample_actions,
)
from .dqn import (
    DqnAgent,
    dqn_update,
    epsilon_greedy,
    epsilon_schedule,
    greedy_action,
    make_dqn,
)
from .envs import GridEnv, LockEnv, OfflineDataset, collect_offline, make_env
from .nets import adam_init, load_mlp, mlp_forward, save_mlp
from .pretrain import pretrain_critics, pretrain_generator
from .replay import (
    CriticPair,
    ReplayBuffer,
    critic_update,
    make_critic_pair,
    td_target,
    value_update,
)

__all__ = [
    "RunConfig",
    "SeedStreams",
    "EvalSummary",
    "PipelineResult",
    "BUDGET_SPLITS",
    "default_config",
    "load_config",
    "save_config",
    "make_streams",
    "budget_split",
    "run_eval",
    "run_pretrain",
    "run_pipeline",
    "run_dqn_pipeline",
    "run_ablation_sweep",
    "post_switch_steps_to_goal",
    "kl_refresh_improvements",
    "save_actor",
    "load_actor",
    "load_checkpoints",
]

METRICS_SCHEMA = 1

# (n_roll, n_rand) per total candidate budget; odd budgets fall back to the
# one-third/two-thirds split.
BUDGET_SPLITS: dict[int, tuple[int, int]] = {
    4: (1, 3),
    8: (2, 6),
    12: (4, 8),
    16: (5, 11),
    24: (8, 16),
    32: (10, 22),
    64: (21, 43),
    128: (42, 86),
}


def budget_split(budget: int) -> tuple[int, int]:
    if budget in BUDGET_SPLITS:
        return BUDGET_SPLITS[budget]
    n_roll = int(round(budget / 3))
    return n_roll, budget - n_roll


@dataclass
class RunConfig:
    """Everything one run needs; defaults are the generic hyperparameters."""

    env: str = "toy3"
    seed: int = 0
    data_seed: int = 7
    gamma: float = 0.99
    beta: float = 1.0
    alpha: float = 0.1
    tau: float = 0.005
    clip_c: float = 5.0
    smooth_eps: float = 0.01
    norm_eps: float = 1e-6
    n_euler: int = 20
    n_roll: int = 64
    n_rand: int = 16
    refresh_interval: int = 1000
    rho: float = 0.25
    lr_critic: float = 3e-4
    lr_value: float = 3e-4
    lr_actor: float = 1e-4
    lr_dqn: float = 3e-4
    batch_size: int = 256
    actor_batch_size: int = 8
    delta: float = 0.05
    buffer_capacity: int = 100_000
    offline_seed_cap: int = 10_000
    online_steps: int = 10_000
    offline_episodes: int = 400
    pretrain_critic_steps: int = 2000
    pretrain_generator_steps: int = 1000
    dqn_offline_steps: int = 2000
    eval_episodes: int = 50
    eval_interval: int = 0
    actor_interval: int = 1
    log_interval: int = 100
    hidden: int = 256
    force_sampled_candidates: bool = False


_TOY_COMMON = dict(
    gamma=0.95,
    n_euler=10,
    batch_size=64,
    actor_batch_size=8,
    n_roll=8,
    n_rand=8,
    refresh_interval=500,
    lr_actor=3e-4,
)

_ENV_OVERRIDES: dict[str, dict] = {
    # Short runs keep the reference fixed: refreshing inside 3k steps kept
    # sharpening the target until one goal swallowed the others.
    "toy3": dict(beta=0.5, online_steps=3000, offline_episodes=400, refresh_interval=10_000),
    "toy4": dict(beta=0.5, online_steps=6000, offline_episodes=600),
    "toy5": dict(beta=0.4, online_steps=10_000, offline_episodes=400),
    # The moved goal is only discoverable if stale experience ages out and the
    # policy keeps an exploration floor, hence the small buffer, the thin
    # offline mix, and the high smoothing weight.
    "goalswitch": dict(
        beta=1.0,
        online_steps=20_000,
        offline_episodes=400,
        smooth_eps=0.2,
        refresh_interval=1000,
        rho=0.05,
        buffer_capacity=4000,
    ),
    "lock": dict(beta=0.5, online_steps=20_000, offline_episodes=600),
}


def default_config(env_name: str, seed: int = 0) -> RunConfig:
    if env_name not in _ENV_OVERRIDES:
        raise ValueError(f"no default configuration for {env_name!r}")
    return replace(RunConfig(env=env_name, seed=seed), **{**_TOY_COMMON, **_ENV_OVERRIDES[env_name]})


def save_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(dataclasses.asdict(cfg), fh, sort_keys=True)


def load_config(path: str | Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping")
    return RunConfig(**raw)


@dataclass
class SeedStreams:
    """Named RNG streams split from one master seed."""

    env: np.random.Generator
    agent: np.random.Generator
    candidate: np.random.Generator
    kl: np.random.Generator
    eval: np.random.Generator


def make_streams(seed: int) -> SeedStreams:
    children = np.random.SeedSequence(seed).spawn(5)
    return SeedStreams(*[np.random.default_rng(c) for c in children])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class MetricsWriter:
    """Versioned delimited metrics with a fixed column order."""

    def __init__(self, path: str | Path, columns: list[str], meta: dict):
        self.path = Path(path)
        self.columns = columns
        meta_str = " ".join(f"{k}={v}" for k, v in sorted(meta.items()))
        self._fh = open(self.path, "w", encoding="utf-8")
        self._fh.write(f"# flowrl-metrics schema={METRICS_SCHEMA} {meta_str}\n")
        self._fh.write(",".join(columns) + "\n")

    def write(self, row: dict) -> None:
        self._fh.write(",".join(_fmt(row[c]) for c in self.columns) + "\n")

    def close(self) -> None:
        self._fh.close()


class _Window:
    """Accumulates per-step values between metric rows."""

    def __init__(self):
        self.values: dict[str, list[float]] = {}

    def push(self, **kv: float) -> None:
        for k, v in kv.items():
            self.values.setdefault(k, []).append(float(v))

    def mean(self, key: str) -> float:
        vals = self.values.get(key, [])
        return float(np.mean(vals)) if vals else float("nan")

    def reset(self) -> None:
        self.values = {}


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalSummary:
    episodes: int
    mean_return: float
    std_return: float
    mean_steps: float
    goal_visits: dict
    distinct_goals: int
    goal_rate: float
    success_rate: float | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["goal_visits"] = {str(k): v for k, v in sorted(self.goal_visits.items())}
        return d


def run_eval(action_fn, env: GridEnv, episodes: int, rng: np.random.Generator) -> EvalSummary:
    """Roll ``episodes`` full episodes, sampling actions from ``action_fn``.

    ``action_fn(feature, rng) -> int``.  No exploration noise is added here;
    stochasticity comes only from the policy itself (and the environment).
    """
    returns = []
    steps = []
    visits: dict = {}
    successes = 0
    for _ in range(episodes):
        obs = env.reset()
        total = 0.0
        while True:
            feat = env.features_batch(np.array([obs[0]]), np.array([obs[1]]))[0]
            action = action_fn(feat, rng)
            obs, reward, done = env.step(action)
            total += reward
            if done:
                break
        returns.append(total)
        steps.append(env.episode_steps)
        cell = env.spec.index_cell(obs[0])
        if cell in env.active_goals():
            visits[cell] = visits.get(cell, 0) + 1
        if isinstance(env, LockEnv) and env.last_success:
            successes += 1
    goal_total = sum(visits.values())
    return EvalSummary(
        episodes=episodes,
        mean_return=float(np.mean(returns)),
        std_return=float(np.std(returns)),
        mean_steps=float(np.mean(steps)),
        goal_visits=visits,
        distinct_goals=len(visits),
        goal_rate=goal_total / episodes,
        success_rate=(successes / episodes) if isinstance(env, LockEnv) else None,
    )


def _generator_action_fn(net: RateNetwork, n_euler: int):
    def fn(feature: np.ndarray, rng: np.random.Generator) -> int:
        actions, _ = sample_actions(net, feature[None, :], n_euler, rng)
        return int(actions[0])

    return fn


def _dqn_action_fn(agent: DqnAgent):
    def fn(feature: np.ndarray, rng: np.random.Generator) -> int:
        return greedy_action(agent, feature)

    return fn


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_actor(path: str | Path, actor: FlowActor, seed: int, step: int) -> None:
    save_mlp(path, actor.net.mlp, seed, step)


def load_actor(path: str | Path, feat_dim: int, n_actions: int) -> FlowActor:
    mlp, _, _ = load_mlp(path)
    if mlp.in_dim != feat_dim + n_actions + 1 or mlp.out_dim != n_actions:
        raise ValueError("checkpoint dims do not match the environment")
    net = RateNetwork(mlp=mlp, feat_dim=feat_dim, n_actions=n_actions)
    return FlowActor(net=net, ref=clone_rate_network(net), adam=adam_init(net.mlp))


def _save_checkpoints(outdir: Path, cp: CriticPair, actor: FlowActor, seed: int, step: int) -> None:
    ckpt = outdir / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    for name, net in [
        ("q1", cp.q1),
        ("q2", cp.q2),
        ("v", cp.v),
        ("q1_target", cp.q1_target),
        ("q2_target", cp.q2_target),
        ("v_target", cp.v_target),
    ]:
        save_mlp(ckpt / f"{name}.ckpt", net, seed, step)
    save_mlp(ckpt / "generator.ckpt", actor.net.mlp, seed, step)


def load_checkpoints(run_dir: str | Path, feat_dim: int, n_actions: int) -> tuple[CriticPair, FlowActor]:
    """Rebuild the critic pair and actor saved by a pretraining run.

    ``run_dir`` may be the run directory itself or its ``checkpoints/``
    subdirectory.  Optimizer state is not checkpointed, so the returned
    networks carry fresh Adam accumulators.
    """
    ckpt = Path(run_dir)
    if (ckpt / "checkpoints").is_dir():
        ckpt = ckpt / "checkpoints"
    nets = {}
    for name in ("q1", "q2", "v", "q1_target", "q2_target", "v_target", "generator"):
        path = ckpt / f"{name}.ckpt"
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint {path}")
        nets[name], _, _ = load_mlp(path)
    cp = CriticPair(
        q1=nets["q1"],
        q2=nets["q2"],
        v=nets["v"],
        q1_target=nets["q1_target"],
        q2_target=nets["q2_target"],
        v_target=nets["v_target"],
        adam_q1=adam_init(nets["q1"]),
        adam_q2=adam_init(nets["q2"]),
        adam_v=adam_init(nets["v"]),
    )
    gen = nets["generator"]
    if gen.in_dim != feat_dim + n_actions + 1 or gen.out_dim != n_actions:
        raise ValueError("generator checkpoint dims do not match the environment")
    net = RateNetwork(mlp=gen, feat_dim=feat_dim, n_actions=n_actions)
    actor = FlowActor(net=net, ref=clone_rate_network(net), adam=adam_init(net.mlp))
    return cp, actor


# ---------------------------------------------------------------------------
# Episode bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class EpisodeLog:
    start_step: int  # environment total_steps when the episode began
    steps: int
    ret: float
    goal: tuple | None


def post_switch_steps_to_goal(episodes: list[EpisodeLog], switch_step: int, max_steps: int) -> float:
    """Mean steps until the goal over episodes starting after the switch.

    Episodes that never reach a goal count at the episode cap, so early
    post-switch failures raise the average instead of disappearing from it.
    """
    post = [e for e in episodes if e.start_step >= switch_step]
    if not post:
        return float("nan")
    return float(np.mean([e.steps if e.goal is not None else max_steps for e in post]))


def kl_refresh_improvements(
    kl_trace: list[float],
    refresh_idx: list[int],
    window: int = 100,
) -> tuple[int, int]:
    """Count refresh events where mean |KL| fell from the window before to after.

    ``refresh_idx`` holds positions in ``kl_trace``, not environment steps.
    """
    better = 0
    events = 0
    trace = np.abs(np.asarray(kl_trace))
    for r in refresh_idx:
        before = trace[max(r - window, 0) : r]
        after = trace[r : r + window]
        if len(before) == 0 or len(after) == 0:
            continue
        events += 1
        if after.mean() < before.mean():
            better += 1
    return better, events


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    config: RunConfig
    offline_eval: EvalSummary
    final_eval: EvalSummary
    episodes: list[EpisodeLog]
    kl_trace: list[float] = field(default_factory=list)
    refresh_steps: list[int] = field(default_factory=list)
    # positions in kl_trace at each refresh; differs from refresh_steps when
    # actor updates are delayed
    refresh_idx: list[int] = field(default_factory=list)
    periodic_evals: list[tuple[int, float]] = field(default_factory=list)
    metrics_path: Path | None = None
    summary_path: Path | None = None


def _goal_columns(env: GridEnv) -> list[tuple[str, tuple]]:
    cells = sorted(cell for cell, _ in env.spec.all_goals())
    return [(f"visits_{r}_{c}", (r, c)) for r, c in cells]


def _batch_features(env: GridEnv, batch) -> tuple[np.ndarray, np.ndarray]:
    feats = env.features_batch(batch.obs_idx, batch.extras)
    next_feats = env.features_batch(batch.next_idx, batch.next_extras)
    return feats, next_feats


def _pretrain_agents(
    cfg: RunConfig,
    ds: OfflineDataset,
    env: GridEnv,
    rng: np.random.Generator,
) -> tuple[CriticPair, FlowActor]:
    """TD pretraining for the critics, then behavior matching for the actor."""
    feature_fn = env.features_batch
    cp, _ = pretrain_critics(
        ds,
        feature_fn,
        env.n_actions,
        cfg.pretrain_critic_steps,
        rng,
        gamma=cfg.gamma,
        tau=cfg.tau,
        lr=cfg.lr_critic,
        batch_size=cfg.batch_size,
        beta=cfg.beta,
        clip_c=cfg.clip_c,
        hidden=cfg.hidden,
    )
    pool = feature_fn(ds.obs_idx, ds.extras)
    actor, _ = pretrain_generator(
        cp,
        pool,
        env.n_actions,
        cfg.pretrain_generator_steps,
        rng,
        beta=cfg.beta,
        clip_c=cfg.clip_c,
        delta=cfg.delta,
        n_euler=cfg.n_euler,
        batch_size=cfg.actor_batch_size,
        lr=cfg.lr_actor,
        hidden=cfg.hidden,
    )
    return cp, actor


def run_pretrain(
    cfg: RunConfig,
    outdir: str | Path,
    ds: OfflineDataset | None = None,
) -> tuple[EvalSummary, Path]:
    """Offline phase on its own: collect, pretrain, checkpoint, evaluate.

    Returns the offline evaluation and the directory holding the checkpoints,
    ready to hand to ``run_pipeline(..., pretrain_from=...)``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, outdir / "config.yaml")
    streams = make_streams(cfg.seed)
    env = make_env(cfg.env, rng=streams.env)
    if ds is None:
        ds = collect_offline(make_env(cfg.env), cfg.offline_episodes, cfg.data_seed)
    cp, actor = _pretrain_agents(cfg, ds, env, streams.agent)
    _save_checkpoints(outdir, cp, actor, cfg.seed, 0)
    action_fn = _generator_action_fn(actor.net, cfg.n_euler)
    offline_eval = run_eval(action_fn, make_env(cfg.env, rng=streams.env), cfg.eval_episodes, streams.eval)
    summary = {
        "env": cfg.env,
        "seed": cfg.seed,
        "offline_eval": offline_eval.to_dict(),
    }
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return offline_eval, outdir / "checkpoints"


def run_pipeline(
    cfg: RunConfig,
    outdir: str | Path,
    ds: OfflineDataset | None = None,
    pretrain_from: str | Path | None = None,
    cold_start: bool = False,
) -> PipelineResult:
    """Collect, pretrain, fine-tune, and evaluate the generator agent.

    ``pretrain_from`` skips the offline phase and fine-tunes the checkpoints
    found there; ``cold_start`` skips it with freshly initialized networks
    instead.  The replay buffer is seeded from the offline dataset either way,
    since the online update mixes offline and online transitions.
    """
    if pretrain_from is not None and cold_start:
        raise ValueError("pass pretrain_from or cold_start, not both")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, outdir / "config.yaml")
    streams = make_streams(cfg.seed)
    env = make_env(cfg.env, rng=streams.env)
    k = env.n_actions
    if ds is None:
        ds = collect_offline(make_env(cfg.env), cfg.offline_episodes, cfg.data_seed)

    if pretrain_from is not None:
        feat_dim = env.features_batch(np.array([0]), np.zeros((1, env.n_extras))).shape[1]
        cp, actor = load_checkpoints(pretrain_from, feat_dim, k)
    elif cold_start:
        feat_dim = env.features_batch(np.array([0]), np.zeros((1, env.n_extras))).shape[1]
        cp = make_critic_pair(feat_dim, k, streams.agent, cfg.hidden)
        actor = make_actor(feat_dim, k, streams.agent, cfg.hidden)
    else:
        cp, actor = _pretrain_agents(cfg, ds, env, streams.agent)
        _save_checkpoints(outdir, cp, actor, cfg.seed, 0)

    action_fn = _generator_action_fn(actor.net, cfg.n_euler)
    offline_eval = run_eval(action_fn, make_env(cfg.env, rng=streams.env), cfg.eval_episodes, streams.eval)

    buf = ReplayBuffer(env.n_extras, cfg.buffer_capacity)
    buf.seed_offline(ds, streams.agent, cfg.offline_seed_cap)

    goal_cols = _goal_columns(env)
    columns = (
        ["step", "episodes", "return_mean", "l_dfm", "l_kl", "q1_loss", "q2_loss", "v_loss"]
        + [name for name, _ in goal_cols]
        + ["clamped_steps", "refreshed"]
    )
    metrics_path = outdir / "metrics.csv"
    writer = MetricsWriter(
        metrics_path, columns, {"agent": "flow", "env": cfg.env, "seed": cfg.seed}
    )
    window = _Window()
    episodes: list[EpisodeLog] = []
    visit_totals = {cell: 0 for _, cell in goal_cols}
    kl_trace: list[float] = []
    refresh_steps: list[int] = []
    refresh_idx: list[int] = []
    periodic_evals: list[tuple[int, float]] = []
    clamped_total = 0
    refreshed_in_window = 0

    obs = env.reset()
    episode_start = env.total_steps
    episode_return = 0.0
    for step in range(1, cfg.online_steps + 1):
        feat = env.features_batch(np.array([obs[0]]), np.array([obs[1]]))[0]
        acts, clamps = sample_actions(actor.net, feat[None, :], cfg.n_euler, streams.agent)
        clamped_total += clamps
        action = int(acts[0])
        next_obs, reward, done = env.step(action)
        buf.add(obs, action, reward, next_obs, done)
        episode_return += reward
        if done:
            cell = env.spec.index_cell(next_obs[0])
            goal = cell if cell in env.active_goals() else None
            if goal is not None and goal in visit_totals:
                visit_totals[goal] += 1
            episodes.append(
                EpisodeLog(
                    start_step=episode_start,
                    steps=env.episode_steps,
                    ret=episode_return,
                    goal=goal,
                )
            )
            window.push(episode_return=episode_return)
            obs = env.reset()
            episode_start = env.total_steps
            episode_return = 0.0
        else:
            obs = next_obs

        batch = buf.sample_mixed(streams.agent, cfg.batch_size, cfg.rho)
        feats, next_feats = _batch_features(env, batch)
        v_next, _ = mlp_forward(cp.v_target, next_feats)
        y = td_target(batch.rewards, v_next[:, 0], batch.dones, cfg.gamma)
        q1_loss, q2_loss = critic_update(cp, feats, batch.actions, y, cfg.lr_critic)

        if step % cfg.actor_interval == 0:
            actor_batch = buf.sample_mixed(streams.agent, cfg.actor_batch_size, cfg.rho)
            actor_feats, _ = _batch_features(env, actor_batch)
            plan = build_target_plan(
                actor,
                cp,
                actor_feats,
                cfg.n_roll,
                cfg.n_rand,
                cfg.n_euler,
                cfg.smooth_eps,
                cfg.beta,
                cfg.clip_c,
                streams.candidate,
                cfg.force_sampled_candidates,
            )
            clamped_total += plan.clamped_steps
            v_loss = value_update(cp, actor_feats, plan.lagged_full, cfg.lr_value)
            losses = actor_step(
                actor,
                actor_feats,
                plan.target_full,
                cfg.alpha,
                cfg.delta,
                cfg.n_euler,
                streams.kl,
                cfg.lr_actor,
            )
            clamped_total += losses.clamped_steps
            kl_trace.append(losses.kl)
            window.push(l_dfm=losses.dfm, l_kl=losses.kl, v=v_loss)
        cp.soft_update_targets(cfg.tau)
        if step % cfg.refresh_interval == 0:
            refresh_reference(actor)
            refresh_steps.append(step)
            refresh_idx.append(len(kl_trace))
            refreshed_in_window += 1
        if cfg.eval_interval > 0 and step % cfg.eval_interval == 0:
            probe_env = make_env(cfg.env, rng=streams.env)
            probe_env.total_steps = env.total_steps
            probe = run_eval(
                _generator_action_fn(actor.net, cfg.n_euler),
                probe_env,
                cfg.eval_episodes,
                streams.eval,
            )
            periodic_evals.append((step, probe.mean_return))

        window.push(q1=q1_loss, q2=q2_loss)
        if step % cfg.log_interval == 0:
            row = {
                "step": step,
                "episodes": len(episodes),
                "return_mean": window.mean("episode_return"),
                "l_dfm": window.mean("l_dfm"),
                "l_kl": window.mean("l_kl"),
                "q1_loss": window.mean("q1"),
                "q2_loss": window.mean("q2"),
                "v_loss": window.mean("v"),
                "clamped_steps": clamped_total,
                "refreshed": refreshed_in_window,
            }
            for name, cell in goal_cols:
                row[name] = visit_totals[cell]
            writer.write(row)
            window.reset()
            refreshed_in_window = 0
    writer.close()

    (outdir / "checkpoints").mkdir(exist_ok=True)
    save_mlp(outdir / "checkpoints" / "generator_final.ckpt", actor.net.mlp, cfg.seed, cfg.online_steps)
    eval_env = make_env(cfg.env, rng=streams.env)
    if eval_env.spec.switch_step is not None:
        # final evaluation happens in the post-switch phase
        eval_env.total_steps = eval_env.spec.switch_step
    final_eval = run_eval(_generator_action_fn(actor.net, cfg.n_euler), eval_env, cfg.eval_episodes, streams.eval)

    result = PipelineResult(
        config=cfg,
        offline_eval=offline_eval,
        final_eval=final_eval,
        episodes=episodes,
        kl_trace=kl_trace,
        refresh_steps=refresh_steps,
        refresh_idx=refresh_idx,
        periodic_evals=periodic_evals,
        metrics_path=metrics_path,
    )
    _write_summary(outdir, result, env)
    return result


def run_dqn_pipeline(
    cfg: RunConfig,
    outdir: str | Path,
    ds: OfflineDataset | None = None,
) -> PipelineResult:
    """Offline TD phase plus online epsilon-greedy fine-tuning of the baseline."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, outdir / "config.yaml")
    streams = make_streams(cfg.seed)
    env = make_env(cfg.env, rng=streams.env)
    k = env.n_actions
    if ds is None:
        ds = collect_offline(make_env(cfg.env), cfg.offline_episodes, cfg.data_seed)
    probe = env.features_batch(ds.obs_idx[:1], ds.extras[:1])
    agent = make_dqn(probe.shape[1], k, streams.agent, cfg.hidden)

    buf = ReplayBuffer(env.n_extras, cfg.buffer_capacity)
    buf.seed_offline(ds, streams.agent, cfg.offline_seed_cap)
    for _ in range(cfg.dqn_offline_steps):
        batch = buf.sample_offline(streams.agent, cfg.batch_size)
        feats, next_feats = _batch_features(env, batch)
        dqn_update(
            agent, feats, batch.actions, next_feats, batch.rewards, batch.dones,
            cfg.gamma, cfg.lr_dqn, cfg.tau,
        )

    offline_eval = run_eval(_dqn_action_fn(agent), make_env(cfg.env, rng=streams.env), cfg.eval_episodes, streams.eval)

    goal_cols = _goal_columns(env)
    columns = (
        ["step", "episodes", "return_mean", "q_loss", "epsilon"]
        + [name for name, _ in goal_cols]
    )
    metrics_path = outdir / "metrics.csv"
    writer = MetricsWriter(
        metrics_path, columns, {"agent": "dqn", "env": cfg.env, "seed": cfg.seed}
    )
    window = _Window()
    episodes: list[EpisodeLog] = []
    visit_totals = {cell: 0 for _, cell in goal_cols}

    obs = env.reset()
    episode_start = env.total_steps
    episode_return = 0.0
    for step in range(1, cfg.online_steps + 1):
        eps = epsilon_schedule(step - 1, cfg.online_steps)
        feat = env.features_batch(np.array([obs[0]]), np.array([obs[1]]))[0]
        action = epsilon_greedy(agent, feat, eps, streams.agent)
        next_obs, reward, done = env.step(action)
        buf.add(obs, action, reward, next_obs, done)
        episode_return += reward
        if done:
            cell = env.spec.index_cell(next_obs[0])
            goal = cell if cell in env.active_goals() else None
            if goal is not None and goal in visit_totals:
                visit_totals[goal] += 1
            episodes.append(
                EpisodeLog(
                    start_step=episode_start,
                    steps=env.episode_steps,
                    ret=episode_return,
                    goal=goal,
                )
            )
            window.push(episode_return=episode_return)
            obs = env.reset()
            episode_start = env.total_steps
            episode_return = 0.0
        else:
            obs = next_obs

        batch = buf.sample_mixed(streams.agent, cfg.batch_size, cfg.rho)
        feats, next_feats = _batch_features(env, batch)
        loss = dqn_update(
            agent, feats, batch.actions, next_feats, batch.rewards, batch.dones,
            cfg.gamma, cfg.lr_dqn, cfg.tau,
        )
        window.push(q_loss=loss)
        if step % cfg.log_interval == 0:
            row = {
                "step": step,
                "episodes": len(episodes),
                "return_mean": window.mean("episode_return"),
                "q_loss": window.mean("q_loss"),
                "epsilon": eps,
            }
            for name, cell in goal_cols:
                row[name] = visit_totals[cell]
            writer.write(row)
            window.reset()
    writer.close()

    eval_env = make_env(cfg.env, rng=streams.env)
    if eval_env.spec.switch_step is not None:
        eval_env.total_steps = eval_env.spec.switch_step
    final_eval = run_eval(_dqn_action_fn(agent), eval_env, cfg.eval_episodes, streams.eval)

    result = PipelineResult(
        config=cfg,
        offline_eval=offline_eval,
        final_eval=final_eval,
        episodes=episodes,
        metrics_path=metrics_path,
    )
    _write_summary(outdir, result, env)
    return result


def _write_summary(outdir: Path, result: PipelineResult, env: GridEnv) -> None:
    summary = {
        "env": result.config.env,
        "seed": result.config.seed,
        "offline_eval": result.offline_eval.to_dict(),
        "final_eval": result.final_eval.to_dict(),
        "online_episodes": len(result.episodes),
    }
    if env.spec.switch_step is not None:
        summary["post_switch_steps_to_goal"] = post_switch_steps_to_goal(
            result.episodes, env.spec.switch_step, env.spec.max_steps
        )
    if result.refresh_idx:
        better, events = kl_refresh_improvements(result.kl_trace, result.refresh_idx)
        summary["kl_refresh_improved"] = better
        summary["kl_refresh_events"] = events
        summary["kl_all_finite"] = bool(np.all(np.isfinite(result.kl_trace)))
    if result.periodic_evals:
        summary["periodic_evals"] = [[int(s), float(r)] for s, r in result.periodic_evals]
    path = outdir / "summary.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    result.summary_path = path


def run_ablation_sweep(
    base: RunConfig,
    axis: str,
    values: list,
    seeds: list[int],
    outdir: str | Path,
    ds: OfflineDataset | None = None,
) -> list[dict]:
    """One pipeline per (value, seed); aggregated rows land in sweep.csv."""
    if axis not in {"alpha", "n_euler", "beta", "rho", "budget"}:
        raise ValueError(f"unknown sweep axis {axis!r}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        for seed in seeds:
            cfg = replace(base, seed=seed)
            if axis == "budget":
                n_roll, n_rand = budget_split(int(value))
                cfg = replace(cfg, n_roll=n_roll, n_rand=n_rand)
            else:
                cfg = replace(cfg, **{axis: value})
            run_dir = outdir / f"{axis}_{value}" / f"seed_{seed}"
            result = run_pipeline(cfg, run_dir, ds=ds)
            rows.append(
                {
                    "axis": axis,
                    "value": value,
                    "seed": seed,
                    "mean_return": result.final_eval.mean_return,
                    "distinct_goals": result.final_eval.distinct_goals,
                    "goal_rate": result.final_eval.goal_rate,
                }
            )
    with open(outdir / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# flowrl-sweep schema={METRICS_SCHEMA} axis={axis}\n")
        fh.write("axis,value,seed,mean_return,distinct_goals,goal_rate\n")
        for r in rows:
            fh.write(
                f"{r['axis']},{r['value']},{r['seed']},{_fmt(r['mean_return'])},"
                f"{r['distinct_goals']},{_fmt(r['goal_rate'])}\n"
            )
    return rows
