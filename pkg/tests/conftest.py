"""Shared fixtures: one tiny generator run and one tiny baseline run.

Several test modules poke at run artifacts (metrics files, checkpoints,
figures); running the pipelines once per session keeps that affordable.
"""

import dataclasses

import pytest

from flowrl.envs import collect_offline, make_env
from flowrl.harness import default_config, run_dqn_pipeline, run_pipeline


def tiny_config(env="toy3", seed=0, **overrides):
    """A config small enough to fine-tune in about a second."""
    base = dict(
        online_steps=60,
        log_interval=20,
        refresh_interval=30,
        pretrain_critic_steps=40,
        pretrain_generator_steps=20,
        eval_episodes=4,
        offline_episodes=8,
        batch_size=16,
        actor_batch_size=4,
        n_euler=4,
        n_roll=4,
        n_rand=4,
        hidden=32,
    )
    base.update(overrides)
    return dataclasses.replace(default_config(env, seed=seed), **base)


@pytest.fixture(scope="session")
def toy3_dataset():
    return collect_offline(make_env("toy3"), 8, 7)


@pytest.fixture(scope="session")
def tiny_flow_run(tmp_path_factory, toy3_dataset):
    outdir = tmp_path_factory.mktemp("flow_run")
    cfg = tiny_config()
    result = run_pipeline(cfg, outdir, ds=toy3_dataset)
    return cfg, outdir, result


@pytest.fixture(scope="session")
def tiny_dqn_run(tmp_path_factory, toy3_dataset):
    outdir = tmp_path_factory.mktemp("dqn_run")
    cfg = tiny_config(seed=1)
    result = run_dqn_pipeline(cfg, outdir, ds=toy3_dataset)
    return cfg, outdir, result
