"""Plain-text design exchange: nodes / nets / pl / manifest quartet.

nodes:    ``<name> <width> <height> [terminal|macro|star] [seq]``
nets:     ``NetDegree <k> <netname> [weight] [pseudo]`` then k lines ``<inst> <dx> <dy>``
pl:       ``<name> <x> <y>``, instance centers, 4 decimals
manifest: ``core: lx ly ux uy``, ``row_height: h``, ``nodes:/nets:/pl: <file>``

Sizes and offsets are written with ``repr`` so they read back bit-exactly;
the first pin listed under a NetDegree header is the net's driver.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .netlist import Kind, Netlist, NetlistBuilder, Rect

_KIND_TOKENS = {"terminal": Kind.TERMINAL, "macro": Kind.MACRO, "star": Kind.STAR}
_TOKEN_OF = {v: k for k, v in _KIND_TOKENS.items()}


class ParseError(ValueError):
    def __init__(self, path: os.PathLike | str, line: int, message: str) -> None:
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class LinkError(ParseError):
    """A reference to an instance that the nodes file never declared."""


@dataclass(frozen=True)
class ExchangeDesign:
    manifest: Path
    nodes: Path
    nets: Path
    pl: Path


def _fmt(v: float) -> str:
    return repr(float(v))


def _lines(path: Path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield lineno, text.split()


def write_pl(netlist: Netlist, locations: np.ndarray, path: os.PathLike | str) -> Path:
    full = netlist.full_locations(locations)
    path = Path(path)
    with open(path, "w") as fh:
        for inst in netlist.instances:
            x, y = full[inst.id]
            fh.write(f"{inst.name} {x:.4f} {y:.4f}\n")
    return path


def write_design(
    netlist: Netlist, locations: np.ndarray | None, path: os.PathLike | str, name: str | None = None
) -> ExchangeDesign:
    """Write the quartet into directory ``path``. Movables default to the core center."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    stem = name or out.resolve().name or "design"
    files = ExchangeDesign(
        manifest=out / f"{stem}.manifest",
        nodes=out / f"{stem}.nodes",
        nets=out / f"{stem}.nets",
        pl=out / f"{stem}.pl",
    )
    if locations is None:
        locations = np.tile(np.array(netlist.core.center), (netlist.num_instances, 1))

    with open(files.nodes, "w") as fh:
        fh.write(f"# {netlist.num_instances} nodes\n")
        for inst in netlist.instances:
            tokens = [inst.name, _fmt(inst.width), _fmt(inst.height)]
            if inst.kind in _TOKEN_OF:
                tokens.append(_TOKEN_OF[inst.kind])
            if inst.is_sequential:
                tokens.append("seq")
            fh.write(" ".join(tokens) + "\n")

    with open(files.nets, "w") as fh:
        fh.write(f"# {netlist.num_nets} nets\n")
        for net in netlist.nets:
            head = f"NetDegree {net.degree} {net.name}"
            if net.weight != 1.0:
                head += f" {_fmt(net.weight)}"
            if net.is_pseudo:
                head += " pseudo"
            fh.write(head + "\n")
            for pid in net.pin_ids:
                pin = netlist.pins[pid]
                fh.write(f"  {netlist.instances[pin.owner].name} {_fmt(pin.offset_x)} {_fmt(pin.offset_y)}\n")

    write_pl(netlist, locations, files.pl)

    c = netlist.core
    with open(files.manifest, "w") as fh:
        fh.write(f"core: {_fmt(c.lx)} {_fmt(c.ly)} {_fmt(c.ux)} {_fmt(c.uy)}\n")
        fh.write(f"row_height: {_fmt(netlist.row_height)}\n")
        fh.write(f"nodes: {files.nodes.name}\n")
        fh.write(f"nets: {files.nets.name}\n")
        fh.write(f"pl: {files.pl.name}\n")
    return files


def _find_manifest(path: Path) -> Path:
    if path.is_file():
        return path
    found = sorted(path.glob("*.manifest"))
    if len(found) != 1:
        raise FileNotFoundError(f"expected exactly one .manifest in {path}, found {len(found)}")
    return found[0]


def _float(path: Path, lineno: int, token: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(path, lineno, f"expected a number, got {token!r}") from None


def read_pl(path: os.PathLike | str, names: dict[str, int]) -> np.ndarray:
    path = Path(path)
    xy = np.full((len(names), 2), np.nan)
    for lineno, tok in _lines(path):
        if len(tok) < 3:
            raise ParseError(path, lineno, "expected '<name> <x> <y>'")
        if tok[0] not in names:
            raise LinkError(path, lineno, f"unknown instance {tok[0]!r}")
        xy[names[tok[0]]] = (_float(path, lineno, tok[1]), _float(path, lineno, tok[2]))
    return xy


def read_design(path: os.PathLike | str) -> tuple[Netlist, np.ndarray]:
    """Inverse of :func:`write_design`. Instances missing from the pl sit at the core center."""
    manifest = _find_manifest(Path(path))
    base = manifest.parent
    meta: dict[str, list[str]] = {}
    for lineno, tok in _lines(manifest):
        key = tok[0].rstrip(":")
        if not tok[0].endswith(":") or len(tok) < 2:
            raise ParseError(manifest, lineno, "expected 'key: value'")
        meta[key] = tok[1:]
    for key in ("core", "nodes", "nets", "pl"):
        if key not in meta:
            raise ParseError(manifest, 0, f"missing '{key}:' entry")
    if len(meta["core"]) != 4:
        raise ParseError(manifest, 0, "core needs four numbers")
    core = Rect(*(float(v) for v in meta["core"]))
    row_height = float(meta.get("row_height", ["1.0"])[0])

    nodes_path, nets_path, pl_path = (base / meta[k][0] for k in ("nodes", "nets", "pl"))

    raw_nodes = []
    for lineno, tok in _lines(nodes_path):
        if len(tok) < 3:
            raise ParseError(nodes_path, lineno, "expected '<name> <width> <height> [flags]'")
        w, h = _float(nodes_path, lineno, tok[1]), _float(nodes_path, lineno, tok[2])
        kind, seq = Kind.STD_CELL, False
        for flag in tok[3:]:
            if flag == "seq":
                seq = True
            elif flag in _KIND_TOKENS:
                kind = _KIND_TOKENS[flag]
            else:
                raise ParseError(nodes_path, lineno, f"unknown flag {flag!r}")
        raw_nodes.append((tok[0], w, h, kind, seq))
    names = {}
    for k, (name, *_rest) in enumerate(raw_nodes):
        if name in names:
            raise ParseError(nodes_path, 0, f"duplicate node {name!r}")
        names[name] = k

    xy = read_pl(pl_path, names)
    missing = np.isnan(xy[:, 0])
    xy[missing] = core.center

    b = NetlistBuilder(core=core, row_height=row_height)
    for k, (name, w, h, kind, seq) in enumerate(raw_nodes):
        fixed = (float(xy[k, 0]), float(xy[k, 1])) if kind == Kind.TERMINAL else None
        if kind == Kind.TERMINAL and missing[k]:
            raise LinkError(pl_path, 0, f"terminal {name!r} has no location")
        b.add_instance(name, w, h, kind, seq, fixed)

    lines = list(_lines(nets_path))
    i = 0
    while i < len(lines):
        lineno, tok = lines[i]
        if tok[0] != "NetDegree" or len(tok) < 3:
            raise ParseError(nets_path, lineno, "expected 'NetDegree <k> <name> [weight] [pseudo]'")
        try:
            degree = int(tok[1])
        except ValueError:
            raise ParseError(nets_path, lineno, f"bad degree {tok[1]!r}") from None
        extra = tok[3:]
        pseudo = "pseudo" in extra
        extra = [t for t in extra if t != "pseudo"]
        weight = _float(nets_path, lineno, extra[0]) if extra else 1.0
        conns = []
        for j in range(degree):
            if i + 1 + j >= len(lines):
                raise ParseError(nets_path, lineno, f"net {tok[2]!r} ends early")
            pl_no, ptok = lines[i + 1 + j]
            if len(ptok) != 3:
                raise ParseError(nets_path, pl_no, "expected '<inst> <dx> <dy>'")
            if ptok[0] not in names:
                raise LinkError(nets_path, pl_no, f"unknown instance {ptok[0]!r}")
            conns.append((names[ptok[0]], _float(nets_path, pl_no, ptok[1]), _float(nets_path, pl_no, ptok[2])))
        b.add_net(conns, weight=weight, name=tok[2], is_pseudo=pseudo)
        i += 1 + degree
    return b.build(), xy
