"""Matplotlib figures written next to the CSV outputs of each command."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

# no version string, so reruns produce identical files
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return Path(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return math.nan


def plot_training(metrics_csv, out_png):
    rows = _read_csv(metrics_csv)
    steps = [_num(r["env_steps"]) for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for ax, key, title in zip(axes, ("mean_reward", "success_rate", "x_g"),
                              ("mean reward per step", "episode success rate", "curriculum goal x (m)")):
        ax.plot(steps, [_num(r[key]) for r in rows], lw=1.2)
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("control steps")
        ax.grid(alpha=0.3)
    axes[1].set_ylim(-0.02, 1.02)
    return _save(fig, out_png)


def plot_eval(report, out_png):
    rows = report.summary_rows()
    names = [r["difficulty"] for r in rows]
    fig, (a, b) = plt.subplots(1, 2, figsize=(8, 3.2))
    a.bar(names, [100 * r["success_rate"] for r in rows], color="#4c72b0")
    a.set_ylim(0, 100)
    a.set_ylabel("success rate (%)")
    b.bar(names, [0 if math.isnan(r["mean_Nc"]) else r["mean_Nc"] for r in rows],
          yerr=[0 if math.isnan(r["std_Nc"]) else r["std_Nc"] for r in rows], color="#dd8452", capsize=4)
    b.set_ylabel("collisions (successful trials)")
    fig.suptitle(report.mode.value, fontsize=10)
    return _save(fig, out_png)


def _draw_pyramids(ax, spec):
    for u, _, _, p in spec.indexed_pyramids():
        ax.add_patch(Rectangle((p.xp - p.lp / 2, p.yp - p.wp / 2), p.lp, p.wp, fill=False, lw=0.6,
                               ec="#8c564b" if u == 0 else "#7f7f7f", ls="-" if u == 0 else "--"))


def plot_environment(spec, out_png):
    fig, ax = plt.subplots(figsize=(6, 4))
    _draw_pyramids(ax, spec)
    ax.plot(spec.start.x, spec.start.y, "go", label="start")
    ax.plot(*spec.goal_xy, "r*", ms=10, label="goal")
    ax.set_aspect("equal")
    ax.set_xlim(-2.2, 2.2)
    ax.set_ylim(-1.2, 1.2)
    ax.set_title(f"{spec.difficulty.label} seed {spec.seed} (solid floor, dashed ceiling)", fontsize=9)
    ax.legend(fontsize=8, loc="upper right")
    return _save(fig, out_png)


def plot_trajectories(episodes, out_png, spec=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    if spec is not None:
        _draw_pyramids(ax, spec)
    for ep in episodes:
        xs = [s["base_pose"][0] for s in ep.steps]
        ys = [s["base_pose"][1] for s in ep.steps]
        ax.plot(xs, ys, lw=0.8, alpha=0.8)
        if xs:
            ax.plot(xs[-1], ys[-1], "k.", ms=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.grid(alpha=0.3)
    return _save(fig, out_png)


def plot_bench(phases: dict, out_png):
    fig, ax = plt.subplots(figsize=(5, 3))
    names = list(phases)
    ax.bar(names, [1e3 * phases[n] for n in names], color="#55a868")
    ax.set_ylabel("ms per batched step")
    return _save(fig, out_png)
