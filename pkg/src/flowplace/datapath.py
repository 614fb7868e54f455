"""Cluster-local bit stacks and their star-model pseudo nets."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .hierarchy import Cluster
from .netlist import Netlist, StarFragment, star_decompose

log = logging.getLogger(__name__)

_BIT = re.compile(r"^(.*)\[(\d+)\]$")

DATAPATH_P0 = 1.0


@dataclass(frozen=True)
class AlignmentGroup:
    cluster: int
    base_name: str
    members: tuple[int, ...]  # sorted by bit index


def extract_alignment_groups(netlist: Netlist, clusters: list[Cluster]) -> list[AlignmentGroup]:
    """Group ``base[i]`` instances by (cluster, base); singletons are dropped."""
    raw: dict[tuple[int, str], list[tuple[int, int]]] = {}
    for c in clusters:
        for m in c.members:
            hit = _BIT.match(netlist.instances[m].name)
            if hit:
                raw.setdefault((c.id, hit.group(1)), []).append((int(hit.group(2)), m))
    groups = []
    for (cid, base), bits in sorted(raw.items()):
        if len(bits) < 2:
            continue
        bits.sort()
        idx = [b for b, _ in bits]
        if len(set(idx)) != len(idx):
            log.warning("duplicate bit index in group %r of cluster %d", base, cid)
        groups.append(AlignmentGroup(cid, base, tuple(m for _, m in bits)))
    return groups


def build_datapath_pseudonets(groups: list[AlignmentGroup]) -> list[StarFragment]:
    return [star_decompose(g.members, DATAPATH_P0, kind="datapath") for g in groups]


def write_group_dump(groups: list[AlignmentGroup], netlist: Netlist, path: str | Path) -> None:
    """Same layout as the cluster dump: header line, then member names."""
    with open(path, "w") as fh:
        for k, g in enumerate(groups):
            fh.write(f"{k} {g.base_name} {len(g.members)}\n")
            for m in g.members:
                fh.write(f"  {netlist.instances[m].name}\n")
