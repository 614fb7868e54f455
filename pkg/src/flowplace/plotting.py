"""Report figures: convergence curves, layout scatter and ablation bars."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .netlist import Kind, Netlist  # noqa: E402

plt.rcParams.update({"font.size": 9, "axes.spines.top": False, "axes.spines.right": False})


def read_trace_csv(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def plot_convergence(traces: dict[str, dict[str, np.ndarray]], path, stop_overflow: float = 0.1) -> Path:
    """Overflow and HPWL against iteration, one line per run."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3.2))
    for label, tr in traces.items():
        ax0.plot(tr["iter"], tr["overflow"], lw=1.2, label=label)
        ax1.plot(tr["iter"], tr["hpwl"], lw=1.2, label=label)
    ax0.axhline(stop_overflow, color="0.5", ls="--", lw=0.8)
    ax0.set_xlabel("iteration")
    ax0.set_ylabel("overflow")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("HPWL")
    ax0.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_layout(netlist: Netlist, locations: np.ndarray, path, cluster_of: np.ndarray | None = None,
                title: str | None = None) -> Path:
    full = netlist.full_locations(locations)
    core = netlist.core
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.add_patch(Rectangle((core.lx, core.ly), core.width, core.height, fill=False, lw=1.0))
    std = netlist.kind == Kind.STD_CELL
    c = cluster_of[std] if cluster_of is not None else "tab:blue"
    ax.scatter(full[std, 0], full[std, 1], s=1.0, c=c, cmap="tab20", lw=0)
    macros = [
        Rectangle((full[i, 0] - inst.width / 2, full[i, 1] - inst.height / 2), inst.width, inst.height)
        for i, inst in enumerate(netlist.instances) if inst.kind == Kind.MACRO
    ]
    ax.add_collection(PatchCollection(macros, facecolor="none", edgecolor="k", lw=0.8))
    ax.set_xlim(core.lx, core.ux)
    ax.set_ylim(core.ly, core.uy)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_ablation(rows: list[tuple[str, float, float]], path) -> Path:
    """Grouped bars of normalized HPWL and spread per arm."""
    names = [r[0] for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(x - 0.2, [r[1] for r in rows], 0.4, label="HPWL")
    ax.bar(x + 0.2, [r[2] for r in rows], 0.4, label="cluster spread")
    ax.axhline(1.0, color="0.4", lw=0.8)
    ax.set_xticks(x, names)
    ax.set_ylabel("normalized to baseline")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
