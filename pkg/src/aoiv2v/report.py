"""Delimited report files and companion figures.

All CSV output is deterministic: fixed column order, shortest round-trip
float formatting (``repr``), LF newlines.  Figures are rendered headless and
saved next to the delimited files; they are a convenience, the CSV is the
interface.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import METRIC_NAMES, EpisodeResult, SweepCell, moving_average

METRICS_COLUMNS = (
    "sweep_param", "sweep_value", "policy", "seed", "slot",
    "avg_power_w", "avg_drops", "avg_aoi_slots", "avg_aoi_s", "avg_utility",
)
SUMMARY_COLUMNS = ("sweep_param", "sweep_value", "policy", "metric", "mean", "stddev", "n")


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("booleans have no place in these reports")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match the header")
        lines.append(",".join(format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def metrics_rows(
    sweep_param: str,
    sweep_value: Optional[float],
    policy: str,
    seed: int,
    result: EpisodeResult,
) -> list[tuple]:
    rows = []
    table = result.rows
    for j in range(len(table["slot"])):
        rows.append(
            (sweep_param, sweep_value, policy, seed, int(table["slot"][j]))
            + tuple(float(table[name][j]) for name in METRIC_NAMES)
        )
    return rows


def metrics_csv_text(entries: Iterable[tuple]) -> str:
    """entries: (sweep_param, sweep_value|None, policy, seed, EpisodeResult)."""
    rows: list[tuple] = []
    for sweep_param, sweep_value, policy, seed, result in entries:
        rows.extend(metrics_rows(sweep_param, sweep_value, policy, seed, result))
    return _csv_text(METRICS_COLUMNS, rows)


def summary_csv_text(summary: Iterable[dict]) -> str:
    rows = [
        (
            s["sweep_param"], s["sweep_value"], s["policy"], s["metric"],
            s["mean"], s["stddev"], s["n"],
        )
        for s in summary
    ]
    return _csv_text(SUMMARY_COLUMNS, rows)


def cells_to_entries(cells: Sequence[SweepCell]) -> list[tuple]:
    return [
        (c.sweep_param, c.sweep_value, c.policy.value, c.seed, c.result)
        for c in cells
    ]


def single_run_summary(policy: str, result: EpisodeResult) -> list[dict]:
    return [
        {
            "sweep_param": "none",
            "sweep_value": None,
            "policy": policy,
            "metric": name,
            "mean": result.summary[name],
            "stddev": 0.0,
            "n": 1,
        }
        for name in METRIC_NAMES
    ]


def loss_csv_text(slots: np.ndarray, losses: np.ndarray) -> str:
    return _csv_text(("slot", "loss"), zip(slots.tolist(), losses.tolist()))


def cluster_csv_text(midpoints: np.ndarray, labels: np.ndarray) -> str:
    rows = [
        (k, float(midpoints[k, 0]), float(midpoints[k, 1]), int(labels[k]))
        for k in range(len(labels))
    ]
    return _csv_text(("pair", "mid_x_m", "mid_y_m", "group"), rows)


def parse_csv(text: str) -> list[dict[str, str]]:
    """Inverse of the writers above, values left as strings."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError("malformed report line")
        out.append(dict(zip(header, parts)))
    return out


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


# --- figures ---------------------------------------------------------------------

_METRIC_LABELS = {
    "avg_power_w": "mean transmit power (W)",
    "avg_drops": "mean dropped packets per slot",
    "avg_aoi_slots": "mean AoI (slots)",
    "avg_aoi_s": "mean AoI (s)",
    "avg_utility": "mean utility",
}


def save_sweep_figures(out_dir: str | Path, summary: Sequence[dict], param: str) -> list[Path]:
    """One errorbar panel per metric: mean over seeds vs the swept value."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    policies = sorted({s["policy"] for s in summary})
    for metric in METRIC_NAMES:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for policy in policies:
            rows = sorted(
                (s for s in summary if s["policy"] == policy and s["metric"] == metric),
                key=lambda s: s["sweep_value"],
            )
            if not rows:
                continue
            xs = [s["sweep_value"] for s in rows]
            means = [s["mean"] for s in rows]
            errs = [s["stddev"] for s in rows]
            ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3, label=policy)
        ax.set_xlabel(param)
        ax.set_ylabel(_METRIC_LABELS[metric])
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"sweep_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def save_loss_figure(path: str | Path, slots: np.ndarray, losses: np.ndarray,
                     window: int = 500) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(slots, losses, lw=0.4, alpha=0.4, label="per-step loss")
    if len(losses) >= window:
        ma = moving_average(losses, window)
        ax.plot(slots[window - 1:], ma, lw=1.5, label=f"{window}-step mean")
    ax.set_xlabel("slot")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_episode_figure(path: str | Path, result: EpisodeResult, title: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(len(METRIC_NAMES), 1, figsize=(6.0, 10.0), sharex=True)
    for ax, metric in zip(axes, METRIC_NAMES):
        ax.plot(result.rows["slot"], result.rows[metric], lw=0.6)
        ax.set_ylabel(_METRIC_LABELS[metric], fontsize=7)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("slot")
    axes[0].set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_cluster_figure(path: str | Path, midpoints: np.ndarray, labels: np.ndarray,
                        side_m: float) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    scatter = ax.scatter(midpoints[:, 0], midpoints[:, 1], c=labels, cmap="tab10", s=30)
    ax.set_xlim(0, side_m)
    ax.set_ylim(0, side_m)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title("pair midpoints by group", fontsize=9)
    fig.colorbar(scatter, ax=ax, label="group")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
