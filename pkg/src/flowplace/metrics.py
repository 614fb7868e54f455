"""Placement quality metrics and the four-arm ablation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .hierarchy import Cluster
from .netlist import Netlist, hpwl
from .optimizer import PlacerConfig, Trace, dg_place, make_clusters

log = logging.getLogger(__name__)

# (name, use_dataflow, use_datapath)
ARMS = (("full", True, True), ("nf", False, True), ("np", True, False), ("baseline", False, False))


def intra_cluster_spread(locations: np.ndarray, clusters: list[Cluster]) -> float:
    """RMS distance of each clustered instance to its own cluster centroid."""
    total = 0.0
    count = 0
    for c in clusters:
        pts = locations[c.members]
        d = pts - pts.mean(axis=0)
        total += float(np.sum(d * d))
        count += len(c.members)
    return float(np.sqrt(total / count)) if count else 0.0


@dataclass
class ArmResult:
    name: str
    hpwl: float
    spread: float
    overflow: float
    iterations: int
    converged: bool
    seconds: float


@dataclass
class Ablation:
    arms: list[ArmResult]
    inversions: list[str] = field(default_factory=list)
    traces: dict[str, Trace] = field(default_factory=dict)
    locations: dict[str, np.ndarray] = field(default_factory=dict)

    def row(self, name: str) -> ArmResult:
        return next(a for a in self.arms if a.name == name)

    def normalized(self) -> list[tuple[str, float, float]]:
        base = self.row("baseline")
        return [(a.name, a.hpwl / base.hpwl, a.spread / base.spread) for a in self.arms]

    def table(self) -> str:
        lines = ["arm,hpwl,spread,hpwl_norm,spread_norm,overflow,iterations,flag"]
        norm = {n: (h, s) for n, h, s in self.normalized()}
        for a in self.arms:
            h, s = norm[a.name]
            flag = "inversion" if a.name in self.inversions else ""
            lines.append(f"{a.name},{a.hpwl:.1f},{a.spread:.4f},{h:.4f},{s:.4f},{a.overflow:.4f},{a.iterations},{flag}")
        return "\n".join(lines) + "\n"


def run_ablation(netlist: Netlist, cfg: PlacerConfig, clusters: list[Cluster] | None = None) -> Ablation:
    """Run all four arms with one seed; spread is measured on one shared clustering."""
    import time

    clusters = clusters if clusters is not None else make_clusters(netlist, cfg)
    res = Ablation([])
    for name, df, dp in ARMS:
        t0 = time.perf_counter()
        loc, tr = dg_place(netlist, cfg, use_dataflow=df, use_datapath=dp)
        secs = time.perf_counter() - t0
        res.arms.append(ArmResult(name, hpwl(netlist, loc, include_pseudo=False), intra_cluster_spread(loc, clusters),
                                  tr.final_overflow, tr.iterations, tr.converged, secs))
        res.traces[name] = tr
        res.locations[name] = loc
        log.info("arm %s: spread %.3f hpwl %.1f (%.1fs)", name, res.arms[-1].spread, res.arms[-1].hpwl, secs)
    lo = res.row("full").spread
    hi = res.row("baseline").spread
    for name in ("nf", "np"):
        s = res.row(name).spread
        if not min(lo, hi) <= s <= max(lo, hi):
            res.inversions.append(name)
    return res
