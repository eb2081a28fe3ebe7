"""Command-line entry points for data collection, training, and reporting."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import checks as theory_checks
from .envs import collect_offline, env_names, load_dataset, make_env, save_dataset
from .harness import (
    default_config,
    load_actor,
    load_config,
    make_streams,
    run_ablation_sweep,
    run_dqn_pipeline,
    run_eval,
    run_pipeline,
    run_pretrain,
    _generator_action_fn,
)
from .report import render_run, render_sweep


@click.group()
def main() -> None:
    """Discrete generator policies on gridworlds: train, sweep, verify."""


def _resolve_config(config, env, seed, steps):
    cfg = load_config(config) if config else default_config(env or "toy3")
    if env is not None:
        cfg = default_config(env, seed=cfg.seed) if config is None else replace(cfg, env=env)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if steps is not None:
        cfg = replace(cfg, online_steps=steps)
    return cfg


@main.command("collect-data")
@click.option("--env", "env_name", type=click.Choice(env_names()), default="toy3")
@click.option("--episodes", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def collect_data(env_name: str, episodes: int, seed: int, out: str) -> None:
    """Collect a scripted-behaviour dataset and write it to a delimited file."""
    ds = collect_offline(make_env(env_name), episodes, seed)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_dataset(out, ds)
    click.echo(json.dumps(ds.stats, indent=2, default=str))


def _finish_run(result, outdir, figures) -> None:
    if figures:
        for path in render_run(outdir):
            click.echo(f"figure {path}")
    click.echo(f"offline return {result.offline_eval.mean_return:.3f}")
    click.echo(f"final return   {result.final_eval.mean_return:.3f}")
    click.echo(f"summary        {result.summary_path}")


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--env", type=click.Choice(env_names()), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def pretrain(config, env, seed, data, out) -> None:
    """Offline phase only: pretrain on the dataset and save checkpoints."""
    cfg = _resolve_config(config, env, seed, None)
    ds = load_dataset(data) if data else None
    offline_eval, ckpt_dir = run_pretrain(cfg, out, ds=ds)
    click.echo(f"offline return {offline_eval.mean_return:.3f}")
    click.echo(f"checkpoints    {ckpt_dir}")


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--env", type=click.Choice(env_names()), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--steps", type=int, default=None, help="Online fine-tuning steps.")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option(
    "--from",
    "pretrain_from",
    type=click.Path(exists=True, file_okay=False),
    default=None,
    help="Run or checkpoint directory produced by `pretrain`.",
)
@click.option("--cold-start", is_flag=True, help="Fine-tune freshly initialized networks.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def finetune(config, env, seed, steps, data, pretrain_from, cold_start, out, figures) -> None:
    """Online phase: fine-tune pretrained checkpoints (or cold-start)."""
    if pretrain_from is None and not cold_start:
        raise click.UsageError("no checkpoint to fine-tune: pass --from or --cold-start")
    cfg = _resolve_config(config, env, seed, steps)
    ds = load_dataset(data) if data else None
    result = run_pipeline(cfg, out, ds=ds, pretrain_from=pretrain_from, cold_start=cold_start)
    _finish_run(result, out, figures)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--env", type=click.Choice(env_names()), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--steps", type=int, default=None, help="Online fine-tuning steps.")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def run(config, env, seed, steps, data, out, figures) -> None:
    """Pretrain offline, fine-tune online, evaluate, and render figures."""
    cfg = _resolve_config(config, env, seed, steps)
    ds = load_dataset(data) if data else None
    result = run_pipeline(cfg, out, ds=ds)
    _finish_run(result, out, figures)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--env", type=click.Choice(env_names()), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def dqn(config, env, seed, steps, data, out, figures) -> None:
    """Run the value-based baseline through the same offline-to-online path."""
    cfg = _resolve_config(config, env, seed, steps)
    ds = load_dataset(data) if data else None
    result = run_dqn_pipeline(cfg, out, ds=ds)
    _finish_run(result, out, figures)


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--env", "env_name", type=click.Choice(env_names()), required=True)
@click.option("--episodes", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-euler", type=int, default=10, show_default=True)
@click.option("--post-switch/--pre-switch", default=True, show_default=True)
def eval_checkpoint(checkpoint, env_name, episodes, seed, n_euler, post_switch) -> None:
    """Evaluate a saved generator checkpoint."""
    streams = make_streams(seed)
    env = make_env(env_name, rng=streams.env)
    probe = env.features_batch(np.array([0]), np.zeros((1, env.n_extras)))
    actor = load_actor(checkpoint, probe.shape[1], env.n_actions)
    if post_switch and env.spec.switch_step is not None:
        env.total_steps = env.spec.switch_step
    summary = run_eval(
        _generator_action_fn(actor.net, n_euler), env, episodes, streams.eval
    )
    click.echo(json.dumps(summary.to_dict(), indent=2))


@main.command()
@click.option("--axis", type=click.Choice(["alpha", "n_euler", "beta", "rho", "budget"]), required=True)
@click.option("--values", required=True, help="Comma-separated axis values.")
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--env", type=click.Choice(env_names()), default=None)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def ablate(axis, values, seeds, config, env, data, out, figures) -> None:
    """Sweep one knob over several seeds and aggregate the final returns."""
    cfg = _resolve_config(config, env, None, None)
    cast = int if axis in ("n_euler", "budget") else float
    value_list = [cast(v) for v in values.split(",")]
    seed_list = [int(s) for s in seeds.split(",")]
    ds = load_dataset(data) if data else None
    rows = run_ablation_sweep(cfg, axis, value_list, seed_list, out, ds=ds)
    for row in rows:
        click.echo(
            f"{axis}={row['value']} seed={row['seed']} "
            f"return={row['mean_return']:.3f} goals={row['distinct_goals']}"
        )
    if figures:
        for path in render_sweep(out):
            click.echo(f"figure {path}")


@main.command()
@click.option("--run-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--sweep-dir", type=click.Path(exists=True, file_okay=False), default=None)
def report(run_dir, sweep_dir) -> None:
    """Render figures for an existing run or sweep directory."""
    if run_dir is None and sweep_dir is None:
        raise click.UsageError("pass --run-dir or --sweep-dir")
    written = []
    if run_dir:
        written += render_run(run_dir)
    if sweep_dir:
        written += render_sweep(sweep_dir)
    for path in written:
        click.echo(f"figure {path}")


@main.command("check-theory")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--only",
    default=None,
    help="Comma-separated subset of " + ",".join(theory_checks.CHECK_ORDER),
)
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
def check_theory(seed, only, json_out) -> None:
    """Run the numerical verification suites; nonzero exit on any failure."""
    names = tuple(only.split(",")) if only else theory_checks.CHECK_ORDER
    results = theory_checks.run_all(seed, names)
    for res in results:
        click.echo(res.line())
        if not res.passed:
            click.echo(f"  details: {json.dumps(res.details, default=str)}")
    if json_out:
        payload = [
            {
                "name": r.name,
                "passed": r.passed,
                "trials": r.trials,
                "failures": r.failures,
                "details": r.details,
            }
            for r in results
        ]
        Path(json_out).write_text(json.dumps(payload, indent=2, default=str), encoding="utf-8")
    if not all(r.passed for r in results):
        sys.exit(1)


if __name__ == "__main__":
    main()
