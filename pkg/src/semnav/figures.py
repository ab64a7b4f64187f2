"""Matplotlib report figures written next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .semantic_cloud import SafetyLabel

_LABEL_COLORS = {SafetyLabel.SAFE: "#f2f2f2", SafetyLabel.UNSAFE: "#111111",
                 SafetyLabel.UNCLEAR: "#e08830"}


def safety_metrics_figure(table, path) -> None:
    """Grouped bars of Safe/Unsafe/CS/CN percentages per planner column."""
    rows = [("Safe%", table.safe_pct, "#2a9d4e"),
            ("Unsafe%", table.unsafe_pct, "#c03a2b"),
            ("CS%", table.cs_pct, "#1f77b4"),
            ("CN%", table.cn_pct, "#7f7f7f")]
    x = np.arange(len(table.columns))
    width = 0.2
    fig, ax = plt.subplots(figsize=(1.8 + 1.1 * len(table.columns), 4.0))
    for i, (name, values, color) in enumerate(rows):
        heights = [0.0 if v is None else v for v in values]
        ax.bar(x + (i - 1.5) * width, heights, width, label=name, color=color)
    ax.set_xticks(x, table.columns)
    ax.set_ylabel("% of trials")
    ax.set_ylim(0, 100)
    ax.legend(ncol=4, fontsize=8)
    ax.set_title("Path safety per planner variant")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def ablation_figure(mean_traces: dict, path) -> None:
    """Mean path-vertex uncertainty versus number of views, per selector."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for name in sorted(mean_traces):
        trace = mean_traces[name]
        ax.plot(range(len(trace)), trace, marker="o", markersize=3, label=name)
    ax.set_xlabel("views taken")
    ax.set_ylabel("mean path-vertex uncertainty")
    ax.legend(fontsize=8)
    ax.set_title("Uncertainty decay per view selector")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plan_overview_figure(cloud, partition, path_nodes, path,
                         start=None, goal_center=None) -> None:
    """Top-down scatter of the classified cloud with the selected path."""
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    for label in (SafetyLabel.SAFE, SafetyLabel.UNCLEAR, SafetyLabel.UNSAFE):
        idx = partition.indices(label)
        if len(idx):
            ax.scatter(cloud.positions[idx, 0], cloud.positions[idx, 1],
                       s=3, c=_LABEL_COLORS[label], label=label.name.lower(),
                       edgecolors="none")
    if path_nodes:
        xy = np.array([n.pose.position[:2] for n in path_nodes])
        ax.plot(xy[:, 0], xy[:, 1], "-", color="#1f77b4", linewidth=2,
                label="selected path")
        ax.plot(xy[:, 0], xy[:, 1], ".", color="#1f77b4", markersize=5)
    if start is not None:
        ax.plot(start[0], start[1], "g^", markersize=10, label="start")
    if goal_center is not None:
        ax.plot(goal_center[0], goal_center[1], "r*", markersize=12, label="goal")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(fontsize=8, loc="upper right")
    ax.set_facecolor("#d8e4ee")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
