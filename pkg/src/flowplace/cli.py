"""Command line: generate, place, ablate, report.

Exit codes: 0 converged, 2 input or parameter error, 3 stopped without
converging (iteration cap or divergence; outputs are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .bench import AcceleratorSpec, SpecError, generate
from .exchange import ParseError, read_design, write_design, write_pl
from .hierarchy import write_cluster_dump
from .metrics import intra_cluster_spread, run_ablation
from .netlist import Netlist, hpwl
from .optimizer import FlowArtifacts, PlacementDiverged, PlacerConfig, dg_place, make_clusters, write_trace_csv
from .svg import render_svg

log = logging.getLogger("flowplace")

EXIT_OK, EXIT_INPUT, EXIT_CAP = 0, 2, 3

_SPEC_FLAGS = {
    "pu_rows": "--pu", "pes_per_pu": "--pe", "bitwidth": "--bitwidth", "cells_per_bit": "--cells-per-bit",
    "buffer_macros": "--buffer-macros", "fanout_net": "--fanout-net",
}

# flag dest -> PlacerConfig field
_CFG_FLAGS = {
    "target_density": "target_density", "stop_overflow": "stop_overflow", "iter0": "iter_0",
    "max_iters": "max_iterations", "ignore_net_degree": "ignore_net_degree", "workers": "workers", "seed": "seed",
}


class InputError(Exception):
    pass


@dataclass
class RunReport:
    design: str
    flags: dict[str, bool]
    hpwl: float
    overflow: float
    iterations: int
    converged: bool
    wall_time: float
    stages: dict[str, float] = field(default_factory=dict)
    spread: float | None = None

    def render(self) -> str:
        lines = [f"design: {self.design}"]
        lines += [f"{k}: {str(v).lower()}" for k, v in self.flags.items()]
        lines += [
            f"hpwl: {self.hpwl:.4f}",
            f"overflow: {self.overflow:.6f}",
            f"iterations: {self.iterations}",
            f"converged: {str(self.converged).lower()}",
        ]
        if self.spread is not None:
            lines.append(f"cluster_spread: {self.spread:.4f}")
        for k, v in self.stages.items():
            lines.append(f"time_{k}: {v:.3f}")
        lines.append(f"wall_time: {self.wall_time:.3f}")
        return "\n".join(lines) + "\n"


# -- config -------------------------------------------------------------------------


def _coerce(name: str, text: str):
    kinds = {f.name: f.type for f in fields(PlacerConfig)}
    t = str(kinds[name])
    if "bool" in t:
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{name}: expected a boolean, got {text!r}")
        return text.lower() in ("true", "1", "yes")
    if text.lower() == "none" and "None" in t:
        return None
    if "int" in t and "float" not in t:
        return int(float(text)) if "e" in text.lower() else int(text)
    return float(text)


def load_config(path: str | Path | None) -> dict:
    """``key = value`` lines; keys are PlacerConfig field names, '#' starts a comment."""
    if path is None:
        return {}
    out = {}
    names = set(PlacerConfig.field_names())
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError(path, lineno, "expected 'key = value'")
            key, value = (s.strip() for s in text.split("=", 1))
            key = key.replace("-", "_")
            if key not in names:
                raise ParseError(path, lineno, f"unknown key {key!r}")
            try:
                out[key] = _coerce(key, value)
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return out


def config_from_args(args) -> PlacerConfig:
    values = load_config(args.config)
    for dest, name in _CFG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    try:
        return PlacerConfig(**values)
    except ValueError as exc:
        raise InputError(f"invalid configuration: {exc}") from None


# -- commands -----------------------------------------------------------------------


def cmd_generate(args) -> int:
    spec = AcceleratorSpec(
        pu_rows=args.pu, pes_per_pu=args.pe, bitwidth=args.bitwidth, cells_per_bit=args.cells_per_bit,
        buffer_macros=args.buffer_macros, seed=args.seed, fanout_net=args.fanout_net,
    )
    try:
        spec.check()
    except SpecError as exc:
        msg = str(exc)
        for name, flag in _SPEC_FLAGS.items():
            msg = msg.replace(name, flag)
        raise InputError(msg) from None
    nl = generate(spec)
    files = write_design(nl, None, args.output, name=args.name)
    print(f"wrote {files.manifest.parent}: {nl.num_instances} instances, {nl.num_nets} nets")
    return EXIT_OK


def _load(path) -> Netlist:
    t0 = time.perf_counter()
    nl, _ = read_design(path)
    log.info("read %s in %.2fs", path, time.perf_counter() - t0)
    return nl


def cmd_place(args) -> int:
    cfg = config_from_args(args)
    t_start = time.perf_counter()
    t0 = time.perf_counter()
    nl = _load(args.design)
    t_io = time.perf_counter() - t0
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    flags = {"use_dataflow": not args.no_dataflow, "use_datapath": not args.no_datapath}

    art = FlowArtifacts()
    callback = None
    if args.svg:
        svg_dir = out / "svg"
        svg_dir.mkdir(exist_ok=True)
        clusters = make_clusters(nl, cfg)
        cluster_of = np.full(nl.num_instances, -1, dtype=np.int64)
        for c in clusters:
            cluster_of[c.members] = c.id

        def callback(k, loc):
            if k % args.svg == 0:
                render_svg(nl, loc[: nl.num_instances], cluster_of, svg_dir / f"iter_{k:05d}.svg", title=f"iteration {k}")

    code = EXIT_OK
    try:
        loc, trace = dg_place(nl, cfg, artifacts=art, callback=callback, **flags)
        if not trace.converged:
            log.warning("iteration cap reached at overflow %.4f", trace.final_overflow)
            code = EXIT_CAP
    except PlacementDiverged as exc:
        log.error("%s", exc)
        loc, trace = exc.locations[: nl.num_instances], exc.trace
        code = EXIT_CAP

    t0 = time.perf_counter()
    write_pl(nl, loc, out / "placed.pl")
    write_trace_csv(trace, out / "trace.csv")
    if art.clusters:
        write_cluster_dump(art.clusters, nl, out / "clusters.txt")
    stages = dict(trace.stages)
    stages["io"] = t_io + time.perf_counter() - t0
    clusters = art.clusters or make_clusters(nl, cfg)
    report = RunReport(
        design=Path(args.design).name, flags=flags, hpwl=hpwl(nl, loc, include_pseudo=False),
        overflow=trace.final_overflow, iterations=trace.iterations, converged=trace.converged,
        wall_time=0.0, stages=stages, spread=intra_cluster_spread(loc, clusters),
    )
    report.wall_time = sum(stages.values())
    (out / "report.txt").write_text(report.render())
    sys.stdout.write(report.render())
    log.info("total %.2fs", time.perf_counter() - t_start)
    return code


def cmd_ablate(args) -> int:
    cfg = config_from_args(args)
    nl = _load(args.design)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    res = run_ablation(nl, cfg)
    table = res.table()
    (out / "ablation.csv").write_text(table)
    for name, tr in res.traces.items():
        write_trace_csv(tr, out / f"trace_{name}.csv")
    sys.stdout.write(table)
    if res.inversions:
        print(f"# inversions: {' '.join(res.inversions)}")
    return EXIT_OK


def cmd_report(args) -> int:
    from . import plotting

    run = Path(args.run_dir)
    traces = {}
    for p in sorted(run.glob("trace*.csv")):
        label = p.stem.removeprefix("trace").lstrip("_") or "run"
        traces[label] = plotting.read_trace_csv(p)
    if not traces and not (run / "ablation.csv").exists():
        raise InputError(f"{run}: no trace*.csv or ablation.csv to report")
    written = []
    if traces:
        written.append(plotting.plot_convergence(traces, run / "convergence.png"))
    abl = run / "ablation.csv"
    if abl.exists():
        rows = []
        for line in abl.read_text().splitlines()[1:]:
            parts = line.split(",")
            rows.append((parts[0], float(parts[3]), float(parts[4])))
        written.append(plotting.plot_ablation(rows, run / "ablation.png"))
    if args.design and (run / "placed.pl").exists():
        from .exchange import read_pl

        nl = _load(args.design)
        loc = read_pl(run / "placed.pl", nl.name_to_id)
        cluster_of = np.full(nl.num_instances, -1, dtype=np.int64)
        for c in make_clusters(nl, PlacerConfig()):
            cluster_of[c.members] = c.id
        written.append(plotting.plot_layout(nl, loc, run / "layout.png", cluster_of))
    print("figure,path")
    for p in written:
        print(f"{p.stem},{p}")
    print("run,iterations,final_overflow,final_hpwl")
    for label, tr in traces.items():
        print(f"{label},{tr['iter'].size},{tr['overflow'][-1]:.6f},{tr['hpwl'][-1]:.4f}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def _placer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--target-density", type=float)
    p.add_argument("--stop-overflow", type=float)
    p.add_argument("--iter0", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--ignore-net-degree", type=int)
    p.add_argument("--workers", type=int, help="0 = hardware count; default $FLOWPLACE_WORKERS or 1")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flowplace", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic systolic-array design")
    g.add_argument("--pu", type=int, default=4)
    g.add_argument("--pe", type=int, default=8)
    g.add_argument("--bitwidth", type=int, default=16)
    g.add_argument("--cells-per-bit", type=int, default=24)
    g.add_argument("--buffer-macros", type=int, default=4)
    g.add_argument("--fanout-net", type=int, default=0)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--name", help="file stem (default: output directory name)")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    p = sub.add_parser("place", help="run the placement flow on a design")
    p.add_argument("design")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--no-dataflow", action="store_true")
    p.add_argument("--no-datapath", action="store_true")
    p.add_argument("--svg", type=int, default=0, metavar="N", help="SVG snapshot every N iterations")
    _placer_flags(p)
    p.set_defaults(func=cmd_place)

    a = sub.add_parser("ablate", help="full / nf / np / baseline comparison")
    a.add_argument("design")
    a.add_argument("-o", "--output", required=True)
    _placer_flags(a)
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", help="render figures for a place or ablate output directory")
    r.add_argument("run_dir")
    r.add_argument("--design", help="design path, enables the layout figure")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(2, args.verbose), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
