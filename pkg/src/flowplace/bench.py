"""Synthetic systolic-array netlists shaped like Tabla/GeneSys accelerators.

Layout of a generated design (M PU rows, N PEs per row, W bits)::

    ibuf/mem<k>          input buffer macros (sequential)
    ibuf/row<i>/drv[b]   buffer drivers feeding PU row i
    pu<i>/pe<j>/reg[b]   PE registers (sequential)
    pu<i>/pe<j>/s<k>[b]  combinational bit-slice stages
    obuf/col<j>/drv[b]   drivers into the output buffer
    obuf/mem<k>          output buffer macros (sequential)
    io/in<k>, io/out<k>  IO terminals on the core boundary

Horizontal data moves reg -> reg along a row; partial sums leave the last
stage of PE(i, j) into the registers of PE(i+1, j). The seed only decides the
auxiliary cross-bit connections between consecutive stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netlist import Kind, Netlist, NetlistBuilder, Rect

REG_WIDTH = 4.0
DRV_WIDTH = 2.0
ROW_HEIGHT = 1.0


class SpecError(ValueError):
    """Invalid accelerator parameters."""


@dataclass(frozen=True)
class AcceleratorSpec:
    pu_rows: int = 4
    pes_per_pu: int = 8
    bitwidth: int = 16
    cells_per_bit: int = 24
    buffer_macros: int = 4
    seed: int = 1
    macro_util: float = 0.5
    target_util: float = 0.7
    fanout_net: int = 0  # >0 adds one tie net from io/en to that many cells

    def check(self) -> None:
        for name in ("pu_rows", "pes_per_pu", "bitwidth", "cells_per_bit", "buffer_macros"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.macro_util < self.target_util <= 1:
            raise SpecError("need 0 <= macro_util < target_util <= 1")
        if self.fanout_net < 0:
            raise SpecError("fanout_net must be >= 0")

    @property
    def pe_size(self) -> int:
        """Movable instances in one PE subtree."""
        return self.bitwidth * (1 + self.cells_per_bit)

    @property
    def pu_size(self) -> int:
        return self.pes_per_pu * self.pe_size


def _comb_width(stage: int) -> float:
    return 1.0 + 0.5 * (stage % 3)


def generate(spec: AcceleratorSpec) -> Netlist:
    spec.check()
    M, N, W, C, K = spec.pu_rows, spec.pes_per_pu, spec.bitwidth, spec.cells_per_bit, spec.buffer_macros
    rng = np.random.default_rng(spec.seed)

    std_area = ROW_HEIGHT * (
        M * N * W * (REG_WIDTH + sum(_comb_width(k) for k in range(C)))
        + (M + N) * W * DRV_WIDTH
    )
    core_area = std_area / (spec.target_util - spec.macro_util)
    side = math.ceil(math.sqrt(core_area) / ROW_HEIGHT) * ROW_HEIGHT
    core = Rect(0.0, 0.0, side, side)
    macro_side = math.sqrt(spec.macro_util * side * side / (2 * K)) if spec.macro_util > 0 else 0.0
    macro_side = max(macro_side, ROW_HEIGHT)

    b = NetlistBuilder(core=core, row_height=ROW_HEIGHT)

    def out_pin(inst: int, w: float) -> tuple[int, float, float]:
        return (inst, 0.25 * w, 0.0)

    def in_pin(inst: int, w: float) -> tuple[int, float, float]:
        return (inst, -0.25 * w, 0.0)

    ibuf_mem = [b.add_instance(f"ibuf/mem{k}", macro_side, macro_side, Kind.MACRO, True) for k in range(K)]
    ibuf_drv = [
        [b.add_instance(f"ibuf/row{i}/drv[{w}]", DRV_WIDTH, ROW_HEIGHT) for w in range(W)] for i in range(M)
    ]
    reg = np.empty((M, N, W), dtype=np.int64)
    stage = np.empty((M, N, C, W), dtype=np.int64)
    for i in range(M):
        for j in range(N):
            for w in range(W):
                reg[i, j, w] = b.add_instance(f"pu{i}/pe{j}/reg[{w}]", REG_WIDTH, ROW_HEIGHT, is_sequential=True)
            for k in range(C):
                for w in range(W):
                    stage[i, j, k, w] = b.add_instance(f"pu{i}/pe{j}/s{k}[{w}]", _comb_width(k), ROW_HEIGHT)
    obuf_drv = [
        [b.add_instance(f"obuf/col{j}/drv[{w}]", DRV_WIDTH, ROW_HEIGHT) for w in range(W)] for j in range(N)
    ]
    obuf_mem = [b.add_instance(f"obuf/mem{k}", macro_side, macro_side, Kind.MACRO, True) for k in range(K)]

    io_in = [
        b.add_instance(f"io/in{k}", 0.0, 0.0, Kind.TERMINAL, fixed_at=(core.lx, round(core.ly + side * (k + 1) / (K + 1), 4)))
        for k in range(K)
    ]
    io_out = [
        b.add_instance(f"io/out{k}", 0.0, 0.0, Kind.TERMINAL, fixed_at=(core.ux, round(core.ly + side * (k + 1) / (K + 1), 4)))
        for k in range(K)
    ]

    ms = macro_side
    for k in range(K):
        b.add_net([io_in[k], in_pin(ibuf_mem[k], ms)], name=f"io_in{k}")
    for i in range(M):
        mem = ibuf_mem[i % K]
        for w in range(W):
            b.add_net([out_pin(mem, ms), in_pin(ibuf_drv[i][w], DRV_WIDTH)], name=f"ibuf_rd{i}[{w}]")
            b.add_net([out_pin(ibuf_drv[i][w], DRV_WIDTH), in_pin(int(reg[i, 0, w]), REG_WIDTH)],
                      name=f"ibuf_row{i}[{w}]")

    for i in range(M):
        for j in range(N):
            p = f"pu{i}/pe{j}"
            for w in range(W):
                sinks = [in_pin(int(stage[i, j, 0, w]), _comb_width(0))]
                if j + 1 < N:
                    sinks.append(in_pin(int(reg[i, j + 1, w]), REG_WIDTH))
                b.add_net([out_pin(int(reg[i, j, w]), REG_WIDTH)] + sinks, name=f"{p}/x[{w}]")
            for k in range(C - 1):
                cw, nw = _comb_width(k), _comb_width(k + 1)
                for w in range(W):
                    sinks = [in_pin(int(stage[i, j, k + 1, w]), nw)]
                    if W > 1 and rng.random() < 0.5:
                        other = (w + int(rng.integers(1, W))) % W
                        sinks.append(in_pin(int(stage[i, j, k + 1, other]), nw))
                    b.add_net([out_pin(int(stage[i, j, k, w]), cw)] + sinks, name=f"{p}/t{k}[{w}]")
            lw = _comb_width(C - 1)
            for w in range(W):
                if i + 1 < M:
                    sink = in_pin(int(reg[i + 1, j, w]), REG_WIDTH)
                else:
                    sink = in_pin(obuf_drv[j][w], DRV_WIDTH)
                b.add_net([out_pin(int(stage[i, j, C - 1, w]), lw), sink], name=f"{p}/acc[{w}]")

    for j in range(N):
        mem = obuf_mem[j % K]
        for w in range(W):
            b.add_net([out_pin(obuf_drv[j][w], DRV_WIDTH), in_pin(mem, ms)], name=f"obuf_wr{j}[{w}]")
    for k in range(K):
        b.add_net([out_pin(obuf_mem[k], ms), io_out[k]], name=f"io_out{k}")

    if spec.fanout_net:
        en = b.add_instance("io/en", 0.0, 0.0, Kind.TERMINAL, fixed_at=(round(core.center[0], 4), core.uy))
        cells = [int(c) for c in np.concatenate([reg.ravel(), stage.ravel()])]
        cells.sort()
        if spec.fanout_net > len(cells):
            raise SpecError(f"fanout_net={spec.fanout_net} exceeds the {len(cells)} PE cells")
        b.add_net([en] + cells[: spec.fanout_net], name="en")

    return b.build()


# -- ground truth oracles ----------------------------------------------------


def pe_prefix(name: str) -> str | None:
    """'pu<i>/pe<j>' for PE-array instances, else None."""
    parts = name.split("/")
    if len(parts) >= 3 and parts[0].startswith("pu") and parts[1].startswith("pe"):
        return f"{parts[0]}/{parts[1]}"
    return None


def ground_truth_clusters(spec: AcceleratorSpec, netlist: Netlist, max_size: int) -> dict[int, str]:
    """Expected cluster label for every PE-array instance under a size bound.

    Valid when max_size >= spec.pe_size (no PE is ever sliced).
    """
    total = int(netlist.movable.sum())
    labels: dict[int, str] = {}
    for inst in netlist.instances:
        pre = pe_prefix(inst.name)
        if pre is None:
            continue
        pu = pre.split("/")[0]
        if total <= max_size:
            labels[inst.id] = ""
        elif spec.pu_size <= max_size:
            labels[inst.id] = pu
        else:
            labels[inst.id] = pre
    return labels


def ground_truth_bit_slices(spec: AcceleratorSpec, netlist: Netlist) -> set[frozenset[int]]:
    """Every bit stack the generator built, enumerated from the AcceleratorSpec (W >= 2 only)."""
    W = spec.bitwidth
    if W < 2:
        return set()
    ids = netlist.name_to_id
    bases = [f"ibuf/row{i}/drv" for i in range(spec.pu_rows)]
    bases += [f"obuf/col{j}/drv" for j in range(spec.pes_per_pu)]
    for i in range(spec.pu_rows):
        for j in range(spec.pes_per_pu):
            bases.append(f"pu{i}/pe{j}/reg")
            bases += [f"pu{i}/pe{j}/s{k}" for k in range(spec.cells_per_bit)]
    return {frozenset(ids[f"{base}[{w}]"] for w in range(W)) for base in bases}
