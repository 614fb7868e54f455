"""Physical hierarchy from '/'-separated instance names.

Breadth-first walk of the name-prefix tree: a prefix whose subtree fits under
``max_size`` becomes one cluster, larger prefixes recurse, and instances that
sit directly under an oversized prefix are sliced by id into
``ceil(n / max_size)`` chunks. Undersized siblings are merged afterwards.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netlist import Netlist

log = logging.getLogger(__name__)


@dataclass
class Cluster:
    id: int
    members: list[int]
    total_area: float
    label: str
    contains_macro: bool = False

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class BundledNet:
    endpoints: tuple[int, ...]  # node ids, see ClusteredNetlist
    weight: float
    virtual: bool = False


@dataclass
class ClusteredNetlist:
    """Clusters plus bundled nets.

    Node ids ``0..C-1`` are clusters; ``C + t`` is the t-th terminal of the
    flat netlist (``terminals[t]`` gives its instance id).
    """

    clusters: list[Cluster]
    bundled_nets: list[BundledNet]
    terminals: list[int]
    origin: Netlist = field(repr=False)

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    def cluster_of(self) -> np.ndarray:
        """Per flat instance: its cluster id, or -1 for terminals."""
        out = np.full(self.origin.num_instances, -1, dtype=np.int64)
        for c in self.clusters:
            out[c.members] = c.id
        return out


class _Node:
    __slots__ = ("prefix", "children", "leaves", "size")

    def __init__(self, prefix: str) -> None:
        self.prefix = prefix
        self.children: dict[str, _Node] = {}
        self.leaves: list[int] = []
        self.size = 0


def _prefix_tree(netlist: Netlist) -> _Node:
    root = _Node("")
    for inst in netlist.instances:
        if not inst.movable:
            continue
        parts = inst.name.split("/")[:-1]
        node = root
        node.size += 1
        path = []
        for part in parts:
            path.append(part)
            node = node.children.setdefault(part, _Node("/".join(path)))
            node.size += 1
        node.leaves.append(inst.id)
    return root


def _subtree_members(node: _Node) -> list[int]:
    out = list(node.leaves)
    for key in sorted(node.children):
        out.extend(_subtree_members(node.children[key]))
    return sorted(out)


def _merge_small(groups: list[tuple[str, list[int]]], min_size: int, max_size: int) -> list[tuple[str, list[int]]]:
    groups = [(label, list(m)) for label, m in groups]
    while len(groups) > 1:
        small = [k for k, (_, m) in enumerate(groups) if len(m) < min_size]
        if not small:
            break
        u = min(small, key=lambda k: (len(groups[k][1]), k))
        size_u = len(groups[u][1])
        cands = [k for k in range(len(groups)) if k != u and size_u + len(groups[k][1]) <= max_size]
        if not cands:
            break
        t = min(cands, key=lambda k: (len(groups[k][1]), k))
        groups[t] = (groups[t][0], sorted(groups[t][1] + groups[u][1]))
        del groups[u]
    return groups


def extract_hierarchy(netlist: Netlist, min_size: int, max_size: int) -> list[Cluster]:
    if not 1 <= min_size <= max_size:
        raise ValueError(f"need 1 <= min_size <= max_size, got {min_size}, {max_size}")
    root = _prefix_tree(netlist)
    if root.size and not root.children:
        log.warning("instance names carry no hierarchy; slicing %d instances by index", root.size)

    emitted: list[tuple[str, list[int]]] = []
    queue = [root]
    while queue:
        node = queue.pop(0)
        if node.size <= max_size:
            # only the root can arrive here unsplit
            emitted.append((node.prefix, _subtree_members(node)))
            continue
        level: list[tuple[str, list[int]]] = []
        for key in sorted(node.children):
            child = node.children[key]
            if child.size <= max_size:
                level.append((child.prefix, _subtree_members(child)))
            else:
                queue.append(child)
        leaves = sorted(node.leaves)
        nparts = math.ceil(len(leaves) / max_size)
        for k in range(nparts):
            chunk = leaves[k * max_size:(k + 1) * max_size]
            label = f"{node.prefix}#{k}" if nparts > 1 else (node.prefix or "#")
            level.append((label, chunk))
        emitted.extend(_merge_small(level, min_size, max_size))

    areas = netlist.areas
    macro = netlist.kind == 1
    return [
        Cluster(k, members, float(areas[members].sum()), label, bool(macro[members].any()))
        for k, (label, members) in enumerate(emitted)
        if members
    ]


def build_clustered_netlist(netlist: Netlist, clusters: list[Cluster]) -> ClusteredNetlist:
    node_of = np.full(netlist.num_instances, -1, dtype=np.int64)
    for c in clusters:
        node_of[c.members] = c.id
    terminals = [int(i) for i in np.flatnonzero(~netlist.movable)]
    for t, inst in enumerate(terminals):
        node_of[inst] = len(clusters) + t
    if (node_of < 0).any():
        missing = int(np.flatnonzero(node_of < 0)[0])
        raise ValueError(f"instance {netlist.instances[missing].name!r} is in no cluster")

    bundles: dict[tuple[int, ...], float] = defaultdict(float)
    start, pins = netlist.net_csr
    owners = netlist.pin_owner
    for e, net in enumerate(netlist.nets):
        if net.is_pseudo:
            continue
        ends = tuple(sorted(set(node_of[owners[pins[start[e]:start[e + 1]]]].tolist())))
        if len(ends) >= 2:
            bundles[ends] += 1.0
    nets = [BundledNet(k, w) for k, w in sorted(bundles.items())]
    return ClusteredNetlist(clusters, nets, terminals, netlist)


def write_cluster_dump(clusters: list[Cluster], netlist: Netlist, path: str | Path) -> None:
    """``<cluster_id> <label> <size>`` per cluster followed by its member names."""
    with open(path, "w") as fh:
        for c in clusters:
            fh.write(f"{c.id} {c.label or '/'} {c.size}\n")
            for m in c.members:
                fh.write(f"  {netlist.instances[m].name}\n")


def default_bounds(num_movable: int, min_size: int = 200, max_size: int = 4000) -> tuple[int, int]:
    """Scale full-scale bounds by design size / 100K, floored at 10."""
    scale = num_movable / 100_000
    lo = max(10, int(round(min_size * scale)))
    hi = max(10, int(round(max_size * scale)))
    return min(lo, hi), hi
