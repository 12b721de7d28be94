"""Static SVG charts from episode logs and learning curves."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .logs import EpisodeLog


def plot_episode(log: EpisodeLog, out_path: str | Path) -> Path:
    """Extension, force, attitude, and reward channels of one episode."""
    out_path = Path(out_path).with_suffix(".svg")
    t = np.array([rec["t"] for rec in log.records]) / 10.0
    ext = np.array([rec["extensions"] for rec in log.records])
    forces = np.array([rec["forces"] for rec in log.records]) / 1000.0
    roll = np.degrees([rec["roll"] for rec in log.records])
    reward = np.array([rec["reward"]["total"] for rec in log.records])

    fig, axes = plt.subplots(4, 1, figsize=(8, 10), sharex=True)
    labels = ["FL", "FR", "ML", "MR", "RL", "RR"]
    for i in range(6):
        axes[0].plot(t, ext[:, i], label=labels[i], lw=0.9)
    axes[0].set_ylabel("extension [m]")
    axes[0].set_ylim(0.0, 0.5)
    axes[0].legend(ncol=6, fontsize=7, loc="upper right")
    for i in range(6):
        axes[1].plot(t, forces[:, i], lw=0.9)
    axes[1].plot(t, forces.sum(axis=1), "k--", lw=1.2, label="sum")
    axes[1].set_ylabel("arm force [kN]")
    axes[1].legend(fontsize=7)
    axes[2].plot(t, roll, "C3", lw=1.0)
    axes[2].set_ylabel("roll [deg]")
    axes[3].plot(t, reward, "C2", lw=1.0)
    axes[3].set_ylabel("reward")
    axes[3].set_xlabel("time [s]")
    title = log.header.get("scenario", "") or "episode"
    fig.suptitle(f"{title}  (config {log.header.get('config_hash', '')[:8]})")
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_curve(curve_csv: str | Path, out_path: str | Path) -> Path:
    """Learning curve: evaluation return and success rate over steps."""
    out_path = Path(out_path).with_suffix(".svg")
    rows = list(csv.DictReader(open(curve_csv)))
    if not rows:
        raise ValueError(f"{curve_csv}: empty curve file")
    steps, returns, success, lessons = [], [], [], []
    offset = 0.0
    last_lesson = None
    for r in rows:
        lesson = int(r["lesson"])
        if last_lesson is not None and lesson != last_lesson:
            offset = steps[-1]
        last_lesson = lesson
        steps.append(offset + float(r["step"]))
        returns.append(float(r["mean_return"]))
        success.append(float(r["success_rate"]))
        lessons.append(lesson)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(steps, returns, "C0.-", label="mean return")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("evaluation return")
    ax2 = ax.twinx()
    ax2.plot(steps, success, "C1.--", label="success rate")
    ax2.set_ylabel("success rate")
    ax2.set_ylim(0, 1.05)
    for k in range(1, len(lessons)):
        if lessons[k] != lessons[k - 1]:
            ax.axvline(steps[k - 1], color="gray", lw=0.8, ls=":")
    fig.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_signal_log(log, sim=None, out_path: str | Path = "sysid.svg") -> Path:
    """Calibration-style channel comparison (recorded vs replayed)."""
    out_path = Path(out_path).with_suffix(".svg")
    ext_keys = sorted(k for k in log.channels if k.startswith("ext_"))
    force_keys = sorted(k for k in log.channels if k.startswith("force_"))
    nrows = (1 if ext_keys else 0) + (1 if force_keys else 0) + 1
    fig, axes = plt.subplots(nrows, 1, figsize=(8, 3 * nrows), sharex=True)
    axes = np.atleast_1d(axes)
    row = 0
    if ext_keys:
        for k in ext_keys:
            axes[row].plot(log.time, log.channels[k], lw=0.9, label=k)
            if sim is not None and k in sim.channels:
                axes[row].plot(sim.time, sim.channels[k], "--", lw=0.9)
        axes[row].set_ylabel("extension [m]")
        axes[row].legend(fontsize=6, ncol=3)
        row += 1
    if force_keys:
        total = np.sum([log.channels[k] for k in force_keys], axis=0)
        axes[row].plot(log.time, total / 1000.0, "k", label="recorded sum")
        if sim is not None:
            sim_total = np.sum([sim.channels[k] for k in force_keys
                                if k in sim.channels], axis=0)
            axes[row].plot(sim.time, sim_total / 1000.0, "r--", label="sim sum")
        axes[row].set_ylabel("total load [kN]")
        axes[row].legend(fontsize=7)
        row += 1
    cmd_keys = [k for k in log.channels
                if k.startswith("susp_target") or k in ("throttle",
                                                        "steering_target")]
    for k in cmd_keys:
        axes[row].plot(log.time, log.channels[k], lw=0.8, label=k)
    axes[row].set_ylabel("commands")
    axes[row].set_xlabel("time [s]")
    axes[row].legend(fontsize=6, ncol=3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
