"""Fine-tuning of discrete generative policies represented as CTMC generators.

The package is organised around a small set of layers:

- ``ctmc``: rate rows, Euler simulation of finite-state jump processes, and a
  dense forward-equation integrator used as the numerical oracle.
- ``transport``: the linear probability bridge, the independent-coupling
  generator that transports the bridge, and the candidate-restriction bounds.
- ``nets``: hand-rolled float64 MLPs with explicit reverse-mode gradients,
  Adam, soft target updates, and flat binary checkpoints.
- ``envs``: the gridworld suite, offline data collection, and value iteration.
- ``replay`` / ``targets`` / ``actor`` / ``pretrain`` / ``dqn``: the learning
  components (critics, candidate sets, rate-network actor, offline pretraining,
  and the double-DQN baseline).
- ``harness`` / ``checks`` / ``report`` / ``cli``: reproducible runs, the
  executable theory checks, figure rendering, and the command line.
"""

from flowrl import (
    actor,
    checks,
    ctmc,
    dqn,
    envs,
    harness,
    nets,
    pretrain,
    replay,
    report,
    targets,
    transport,
)

__all__ = [
    "actor",
    "checks",
    "ctmc",
    "dqn",
    "envs",
    "harness",
    "nets",
    "pretrain",
    "replay",
    "report",
    "targets",
    "transport",
]

__version__ = "0.1.0"
