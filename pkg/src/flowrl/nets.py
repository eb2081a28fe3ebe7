"""Hand-rolled float64 MLPs with explicit reverse-mode gradients.

Everything the learners need lives here: a fixed two-hidden-layer ReLU
architecture, manual backward passes (no autodiff graph anywhere in this
package), Adam with bias correction, Polyak-style soft target updates, a
central-finite-difference checker exercised by both the unit tests and the
theory-check CLI, and checkpoints stored as a JSON header line followed by
the flat little-endian float64 parameter block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "Mlp",
    "MlpGrads",
    "AdamState",
    "init_mlp",
    "mlp_forward",
    "mlp_backward",
    "adam_init",
    "adam_step",
    "soft_update",
    "clone_mlp",
    "flatten_params",
    "set_params",
    "numeric_grad",
    "save_mlp",
    "load_mlp",
]

HIDDEN_WIDTH = 256

# Adam defaults, shared by every learner in the package.
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Mlp:
    """Two hidden ReLU layers of width 256, linear output head."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w3.shape[1]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1], self.w3.shape[1])

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)


@dataclass
class MlpGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)


def init_mlp(
    in_dim: int,
    out_dim: int,
    rng: np.random.Generator,
    hidden: int = HIDDEN_WIDTH,
    zero: bool = False,
) -> Mlp:
    """He-style initialisation (zero biases); ``zero=True`` gives an all-zero net."""
    if zero:
        return Mlp(
            w1=np.zeros((in_dim, hidden)),
            b1=np.zeros(hidden),
            w2=np.zeros((hidden, hidden)),
            b2=np.zeros(hidden),
            w3=np.zeros((hidden, out_dim)),
            b3=np.zeros(out_dim),
        )
    return Mlp(
        w1=rng.normal(0.0, np.sqrt(2.0 / in_dim), (in_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, hidden)),
        b2=np.zeros(hidden),
        w3=rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, out_dim)),
        b3=np.zeros(out_dim),
    )


def mlp_forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Batched forward pass.  Returns (output (n, out), cache for backward)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z1 = x @ net.w1 + net.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ net.w2 + net.b2
    h2 = np.maximum(z2, 0.0)
    out = h2 @ net.w3 + net.b3
    return out, (x, h1, h2)


def mlp_backward(net: Mlp, cache: tuple, grad_out: np.ndarray) -> MlpGrads:
    """Reverse-mode gradients of ``sum(grad_out * output)`` w.r.t. parameters."""
    x, h1, h2 = cache
    grad_out = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
    gw3 = h2.T @ grad_out
    gb3 = grad_out.sum(axis=0)
    gh2 = grad_out @ net.w3.T
    gz2 = gh2 * (h2 > 0.0)
    gw2 = h1.T @ gz2
    gb2 = gz2.sum(axis=0)
    gh1 = gz2 @ net.w2.T
    gz1 = gh1 * (h1 > 0.0)
    gw1 = x.T @ gz1
    gb1 = gz1.sum(axis=0)
    return MlpGrads(w1=gw1, b1=gb1, w2=gw2, b2=gb2, w3=gw3, b3=gb3)


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0


def adam_init(net: Mlp) -> AdamState:
    return AdamState(
        m=[np.zeros_like(a) for a in net.arrays()],
        v=[np.zeros_like(a) for a in net.arrays()],
        step=0,
    )


def adam_step(
    net: Mlp,
    grads: MlpGrads,
    state: AdamState,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    for param, grad, m, v in zip(net.arrays(), grads.arrays(), state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Polyak averaging ``target <- (1 - tau) target + tau online`` in place."""
    for t_arr, o_arr in zip(target.arrays(), online.arrays()):
        t_arr *= 1.0 - tau
        t_arr += tau * o_arr


def clone_mlp(net: Mlp) -> Mlp:
    return Mlp(*(a.copy() for a in net.arrays()))


def flatten_params(net: Mlp) -> np.ndarray:
    return np.concatenate([a.ravel() for a in net.arrays()])


def set_params(net: Mlp, flat: np.ndarray) -> None:
    offset = 0
    for a in net.arrays():
        a[...] = flat[offset : offset + a.size].reshape(a.shape)
        offset += a.size
    if offset != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, net needs {offset}")


def numeric_grad(
    loss_fn: Callable[[], float], net: Mlp, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of ``loss_fn`` w.r.t. every parameter of ``net``.

    ``loss_fn`` is a closure over ``net``; parameters are perturbed in place
    and restored afterwards.  O(P) loss evaluations, so keep the nets small.
    """
    flat = flatten_params(net)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        set_params(net, flat)
        up = loss_fn()
        flat[i] = orig - h
        set_params(net, flat)
        down = loss_fn()
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    set_params(net, flat)
    return grad


CHECKPOINT_MAGIC = "flowrl-mlp-v1"


def save_mlp(path: str | Path, net: Mlp, seed: int, step: int) -> None:
    """Write a checkpoint: one JSON header line, then flat little-endian float64."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "dims": list(net.dims),
        "seed": int(seed),
        "step": int(step),
    }
    flat = flatten_params(net).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(flat.tobytes())


def load_mlp(path: str | Path) -> tuple[Mlp, int, int]:
    """Read a checkpoint written by :func:`save_mlp`; returns (net, seed, step)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("format") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a flowrl MLP checkpoint")
        in_dim, h1, h2, out_dim = header["dims"]
        if h1 != h2:
            raise ValueError("hidden widths must match")
        blob = fh.read()
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    net = init_mlp(in_dim, out_dim, np.random.default_rng(0), hidden=h1, zero=True)
    set_params(net, flat)
    return net, int(header["seed"]), int(header["step"])
