"""Render figures from the delimited outputs a run or sweep leaves behind."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def load_metrics(path: str | Path) -> tuple[dict, list[str], np.ndarray]:
    """Parse a metrics file into (header metadata, column names, data rows)."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        columns = fh.readline().strip().split(",")
        body = fh.read()
    if not header.startswith("# flowrl-metrics"):
        raise ValueError(f"{path} is not a metrics file")
    meta = dict(tok.split("=", 1) for tok in header[2:].split()[1:])
    if body.strip():
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    else:
        data = np.zeros((0, len(columns)))
    return meta, columns, data


def _column(columns: list[str], data: np.ndarray, name: str) -> np.ndarray:
    return data[:, columns.index(name)]


def render_run(run_dir: str | Path) -> list[Path]:
    """Write learning-curve, loss, and goal-visit figures next to metrics.csv."""
    run_dir = Path(run_dir)
    meta, columns, data = load_metrics(run_dir / "metrics.csv")
    agent = meta.get("agent", "flow")
    steps = _column(columns, data, "step")
    written: list[Path] = []

    summary = {}
    summary_path = run_dir / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))

    fig, ax = plt.subplots(figsize=(6, 4))
    returns = _column(columns, data, "return_mean")
    ok = ~np.isnan(returns)
    ax.plot(steps[ok], returns[ok], lw=1.2, color="tab:blue")
    offline = summary.get("offline_eval", {}).get("mean_return")
    if offline is not None:
        ax.axhline(offline, color="tab:gray", ls="--", lw=1.0, label="offline policy")
        ax.legend(loc="lower right", fontsize=8)
    ax.set_xlabel("environment step")
    ax.set_ylabel("episode return (window mean)")
    ax.set_title(f"{meta.get('env', '?')} / {agent} / seed {meta.get('seed', '?')}")
    fig.tight_layout()
    out = run_dir / "learning_curve.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    written.append(out)

    fig, ax = plt.subplots(figsize=(6, 4))
    if agent == "dqn":
        ax.plot(steps, _column(columns, data, "q_loss"), lw=1.0, label="TD loss")
        twin = ax.twinx()
        twin.plot(
            steps, _column(columns, data, "epsilon"), lw=1.0, color="tab:orange"
        )
        twin.set_ylabel("exploration epsilon", color="tab:orange")
    else:
        for name, label in (
            ("l_dfm", "rate matching"),
            ("l_kl", "path divergence"),
            ("q1_loss", "critic 1"),
            ("v_loss", "value"),
        ):
            ax.plot(steps, _column(columns, data, name), lw=1.0, label=label)
        ax.legend(fontsize=8)
    ax.set_xlabel("environment step")
    ax.set_ylabel("loss (window mean)")
    fig.tight_layout()
    out = run_dir / "losses.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    written.append(out)

    visit_cols = [c for c in columns if c.startswith("visits_")]
    if visit_cols:
        fig, ax = plt.subplots(figsize=(6, 4))
        for name in visit_cols:
            cell = name[len("visits_") :].replace("_", ",")
            ax.plot(steps, _column(columns, data, name), lw=1.2, label=f"goal ({cell})")
        ax.set_xlabel("environment step")
        ax.set_ylabel("cumulative terminal visits")
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = run_dir / "goal_visits.png"
        fig.savefig(out, dpi=120)
        plt.close(fig)
        written.append(out)
    return written


def render_sweep(sweep_dir: str | Path) -> list[Path]:
    """Aggregate sweep.csv over seeds and plot mean return against the axis."""
    sweep_dir = Path(sweep_dir)
    path = sweep_dir / "sweep.csv"
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# flowrl-sweep"):
            raise ValueError(f"{path} is not a sweep file")
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no rows")
    axis = rows[0]["axis"]
    values = sorted({float(r["value"]) for r in rows})
    mean_ret, std_ret, mean_goals = [], [], []
    for v in values:
        rets = [float(r["mean_return"]) for r in rows if float(r["value"]) == v]
        goals = [float(r["distinct_goals"]) for r in rows if float(r["value"]) == v]
        mean_ret.append(np.mean(rets))
        std_ret.append(np.std(rets))
        mean_goals.append(np.mean(goals))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.errorbar(values, mean_ret, yerr=std_ret, marker="o", capsize=3)
    ax1.set_xlabel(axis)
    ax1.set_ylabel("final mean return")
    ax2.plot(values, mean_goals, marker="s", color="tab:green")
    ax2.set_xlabel(axis)
    ax2.set_ylabel("distinct goals reached")
    if axis in ("alpha", "beta", "rho") and min(values) > 0:
        ax1.set_xscale("log")
        ax2.set_xscale("log")
    fig.tight_layout()
    out = sweep_dir / "ablation.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return [out]
