"""Register-hop dataflow between clusters and the virtual connections it induces.

A hop is one sequential boundary crossed: ``regA -> comb -> regB`` is one hop.
All source registers of a cluster are traced together; each carries one bit
of a Python int so "which sources reached this instance" is a single OR.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .hierarchy import BundledNet, Cluster, ClusteredNetlist
from .netlist import Netlist

log = logging.getLogger(__name__)

HOP_LIMIT = 4


@dataclass(frozen=True)
class DataflowEdge:
    src_cluster: int
    dst_cluster: int
    info_flow: float
    num_hops: int

    @property
    def virtual_weight(self) -> float:
        return virtual_connection(self.info_flow, self.num_hops)


def virtual_connection(info_flow: float, num_hops: int) -> float:
    """Bitwidth attenuated by 2 per register hop."""
    if num_hops < 1:
        raise ValueError("num_hops must be >= 1")
    return info_flow / 2.0 ** num_hops


def _fanout(netlist: Netlist) -> list[list[int]]:
    """Driver instance -> sink instances (first pin of each net drives)."""
    fan: list[set[int]] = [set() for _ in range(netlist.num_instances)]
    start, pins = netlist.net_csr
    owner = netlist.pin_owner
    for e, net in enumerate(netlist.nets):
        if net.is_pseudo or len(net.pin_ids) < 2:
            continue
        drv = owner[net.pin_ids[0]]
        for p in net.pin_ids[1:]:
            s = int(owner[p])
            if s != drv:
                fan[drv].add(s)
    return [sorted(f) for f in fan]


def register_hop_bfs(netlist: Netlist, clusters: list[Cluster], hop_limit: int = HOP_LIMIT) -> list[DataflowEdge]:
    seq = netlist.is_sequential
    cluster_of = np.full(netlist.num_instances, -1, dtype=np.int64)
    for c in clusters:
        cluster_of[c.members] = c.id
    fan = _fanout(netlist)
    if _has_comb_cycle(fan, seq):
        log.warning("combinational cycle in netlist; hop distances remain well defined")
    edges: list[DataflowEdge] = []

    for a in clusters:
        sources = [m for m in a.members if seq[m]]
        if not sources:
            continue
        visited = {s: 1 << k for k, s in enumerate(sources)}  # seq instance -> sources seen
        frontier = dict(visited)
        found: dict[int, tuple[int, int]] = {}
        for hop in range(1, hop_limit + 1):
            if not frontier:
                break
            comb: dict[int, int] = {}
            arrive: dict[int, int] = {}
            work = list(sorted(frontier.items()))
            while work:
                node, mask = work.pop()
                for s in fan[node]:
                    if seq[s]:
                        arrive[s] = arrive.get(s, 0) | mask
                        continue
                    old = comb.get(s, 0)
                    new = mask & ~old
                    if new:
                        comb[s] = old | new
                        work.append((s, new))
            reached: dict[int, int] = {}
            nxt: dict[int, int] = {}
            for r in sorted(arrive):
                mask = arrive[r]
                b = int(cluster_of[r])
                if b >= 0 and b != a.id:
                    reached[b] = reached.get(b, 0) | mask
                fresh = mask & ~visited.get(r, 0)
                if fresh:
                    visited[r] = visited.get(r, 0) | fresh
                    nxt[r] = fresh
            for b, mask in sorted(reached.items()):
                if b not in found:
                    found[b] = (hop, mask.bit_count())
            frontier = nxt
        for b in sorted(found):
            hop, flow = found[b]
            edges.append(DataflowEdge(a.id, b, float(flow), hop))
    return edges


def _has_comb_cycle(fan: list[list[int]], seq: np.ndarray) -> bool:
    comb = [v for v in range(len(fan)) if not seq[v]]
    indeg = dict.fromkeys(comb, 0)
    for v in comb:
        for s in fan[v]:
            if not seq[s]:
                indeg[s] += 1
    ready = [v for v in comb if indeg[v] == 0]
    done = 0
    while ready:
        v = ready.pop()
        done += 1
        for s in fan[v]:
            if not seq[s]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
    return done < len(comb)


def inject_virtual_connections(cnl: ClusteredNetlist, edges: list[DataflowEdge]) -> ClusteredNetlist:
    """Each edge adds its own two-endpoint virtual net; A->B and B->A stay separate."""
    if not edges:
        return cnl
    extra = [BundledNet((e.src_cluster, e.dst_cluster), e.virtual_weight, virtual=True) for e in edges]
    return replace(cnl, bundled_nets=list(cnl.bundled_nets) + extra)


def write_dataflow_dump(edges: list[DataflowEdge], clusters: list[Cluster], path: str | Path) -> None:
    """``<srcLabel> <dstLabel> <info_flow> <hops> <weight>`` per edge."""
    label = {c.id: c.label or "/" for c in clusters}
    with open(path, "w") as fh:
        for e in edges:
            fh.write(f"{label[e.src_cluster]} {label[e.dst_cluster]} {e.info_flow:g} {e.num_hops} {e.virtual_weight:g}\n")
