"""Weighted-average (WA) wirelength, its gradient, and the parallel gradient kernel.

Both gradient routes write per-instance *forces*, i.e. minus the gradient.
The parallel kernel runs five owned-slot phases (per net, per pin, per net,
per pin, per instance); no work item ever writes a slot owned by another, so
the result does not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import workers as _workers
from .netlist import DimensionError, Netlist

IGNORE_NET_DEGREE = 10**9


def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")


# -- shared per-item math ----------------------------------------------------


@njit(inline="always")
def _net_active(deg, limit):
    return deg >= 2 and deg <= limit


@njit(inline="always")
def _pin_grad(x, a_pos, a_neg, b_pos, b_neg, c_pos, c_neg, inv_gamma):
    t_pos = ((1.0 + x * inv_gamma) * b_pos - inv_gamma * c_pos) / (b_pos * b_pos) * a_pos
    t_neg = ((1.0 - x * inv_gamma) * b_neg + inv_gamma * c_neg) / (b_neg * b_neg) * a_neg
    return t_pos - t_neg


# -- serial reference --------------------------------------------------------


@njit(cache=True)
def _wa_value_serial(px, py, net_start, net_pins, weight, gamma, limit):
    inv_gamma = 1.0 / gamma
    total = 0.0
    for e in range(net_start.size - 1):
        lo, hi = net_start[e], net_start[e + 1]
        if not _net_active(hi - lo, limit):
            continue
        for coords in (px, py):
            xmax = -np.inf
            xmin = np.inf
            for k in range(lo, hi):
                v = coords[net_pins[k]]
                xmax = max(xmax, v)
                xmin = min(xmin, v)
            bp = 0.0
            bm = 0.0
            cp = 0.0
            cm = 0.0
            for k in range(lo, hi):
                v = coords[net_pins[k]]
                ap = math.exp((v - xmax) * inv_gamma)
                am = math.exp(-(v - xmin) * inv_gamma)
                bp += ap
                bm += am
                cp += v * ap
                cm += v * am
            total += weight[e] * (cp / bp - cm / bm)
    return total


@njit(cache=True)
def _wa_grad_serial(px, py, pin_net, pin_owner, net_start, net_pins, weight, gamma, limit, n_inst):
    inv_gamma = 1.0 / gamma
    n_pins = px.size
    out = np.zeros((n_inst, 2))
    grads = np.zeros((n_pins, 2))
    for axis in range(2):
        coords = px if axis == 0 else py
        for e in range(net_start.size - 1):
            lo, hi = net_start[e], net_start[e + 1]
            if not _net_active(hi - lo, limit):
                continue
            xmax = -np.inf
            xmin = np.inf
            for k in range(lo, hi):
                v = coords[net_pins[k]]
                if v > xmax:
                    xmax = v
                if v < xmin:
                    xmin = v
            bp = 0.0
            bm = 0.0
            cp = 0.0
            cm = 0.0
            for k in range(lo, hi):
                v = coords[net_pins[k]]
                ap = math.exp((v - xmax) * inv_gamma)
                am = math.exp(-(v - xmin) * inv_gamma)
                bp = bp + ap
                bm = bm + am
                cp = cp + v * ap
                cm = cm + v * am
            w = weight[e]
            for k in range(lo, hi):
                p = net_pins[k]
                v = coords[p]
                ap = math.exp((v - xmax) * inv_gamma)
                am = math.exp(-(v - xmin) * inv_gamma)
                grads[p, axis] = w * _pin_grad(v, ap, am, bp, bm, cp, cm, inv_gamma)
        for p in range(n_pins):
            out[pin_owner[p], axis] = out[pin_owner[p], axis] - grads[p, axis]
    return out


# -- parallel kernel (five owned-slot phases) ---------------------------------


@njit(parallel=True, cache=True)
def _wa_grad_parallel(px, py, pin_net, net_start, net_pins, inst_start, inst_pins, weight, gamma, limit,
                      xmax, xmin, ymax, ymin, bpx, bmx, cpx, cmx, bpy, bmy, cpy, cmy,
                      apx, amx, apy, amy, gx, gy, fx, fy):
    inv_gamma = 1.0 / gamma
    n_nets = net_start.size - 1
    n_pins = px.size
    n_inst = inst_start.size - 1

    # phase 1: per net extremes, zero accumulators
    for e in prange(n_nets):
        lo, hi = net_start[e], net_start[e + 1]
        hx = -np.inf
        lx = np.inf
        hy = -np.inf
        ly = np.inf
        for k in range(lo, hi):
            p = net_pins[k]
            if px[p] > hx:
                hx = px[p]
            if px[p] < lx:
                lx = px[p]
            if py[p] > hy:
                hy = py[p]
            if py[p] < ly:
                ly = py[p]
        xmax[e] = hx
        xmin[e] = lx
        ymax[e] = hy
        ymin[e] = ly
        bpx[e] = 0.0
        bmx[e] = 0.0
        cpx[e] = 0.0
        cmx[e] = 0.0
        bpy[e] = 0.0
        bmy[e] = 0.0
        cpy[e] = 0.0
        cmy[e] = 0.0

    # phase 2: per pin shifted exponentials
    for p in prange(n_pins):
        e = pin_net[p]
        apx[p] = math.exp((px[p] - xmax[e]) * inv_gamma)
        amx[p] = math.exp(-(px[p] - xmin[e]) * inv_gamma)
        apy[p] = math.exp((py[p] - ymax[e]) * inv_gamma)
        amy[p] = math.exp(-(py[p] - ymin[e]) * inv_gamma)

    # phase 3: per net sums in ascending pin order
    for e in prange(n_nets):
        lo, hi = net_start[e], net_start[e + 1]
        for k in range(lo, hi):
            p = net_pins[k]
            bpx[e] = bpx[e] + apx[p]
            bmx[e] = bmx[e] + amx[p]
            cpx[e] = cpx[e] + px[p] * apx[p]
            cmx[e] = cmx[e] + px[p] * amx[p]
            bpy[e] = bpy[e] + apy[p]
            bmy[e] = bmy[e] + amy[p]
            cpy[e] = cpy[e] + py[p] * apy[p]
            cmy[e] = cmy[e] + py[p] * amy[p]

    # phase 4: per pin gradient
    for p in prange(n_pins):
        e = pin_net[p]
        deg = net_start[e + 1] - net_start[e]
        if _net_active(deg, limit):
            w = weight[e]
            gx[p] = w * _pin_grad(px[p], apx[p], amx[p], bpx[e], bmx[e], cpx[e], cmx[e], inv_gamma)
            gy[p] = w * _pin_grad(py[p], apy[p], amy[p], bpy[e], bmy[e], cpy[e], cmy[e], inv_gamma)
        else:
            gx[p] = 0.0
            gy[p] = 0.0

    # phase 5: per instance force over its own pins
    for v in prange(n_inst):
        fx[v] = 0.0
        fy[v] = 0.0
        for k in range(inst_start[v], inst_start[v + 1]):
            p = inst_pins[k]
            fx[v] = fx[v] - gx[p]
            fy[v] = fy[v] - gy[p]


# -- public API ----------------------------------------------------------------


@dataclass
class WAWorkspace:
    """Scratch arrays for the parallel kernel, reused (and re-zeroed) per call."""

    num_nets: int
    num_pins: int
    num_instances: int

    def __post_init__(self) -> None:
        E, P, V = self.num_nets, self.num_pins, self.num_instances
        self.xmax, self.xmin, self.ymax, self.ymin = (np.empty(E) for _ in range(4))
        self.bpx, self.bmx, self.cpx, self.cmx = (np.empty(E) for _ in range(4))
        self.bpy, self.bmy, self.cpy, self.cmy = (np.empty(E) for _ in range(4))
        self.apx, self.amx, self.apy, self.amy = (np.empty(P) for _ in range(4))
        self.gx, self.gy = np.empty(P), np.empty(P)
        self.fx, self.fy = np.empty(V), np.empty(V)

    @classmethod
    def for_netlist(cls, netlist: Netlist) -> "WAWorkspace":
        return cls(netlist.num_nets, netlist.num_pins, netlist.num_instances)

    def check(self, netlist: Netlist) -> None:
        if (self.num_nets, self.num_pins, self.num_instances) != (
            netlist.num_nets, netlist.num_pins, netlist.num_instances
        ):
            raise DimensionError(
                f"workspace sized for {self.num_nets}/{self.num_pins}/{self.num_instances} "
                f"nets/pins/instances, netlist has {netlist.num_nets}/{netlist.num_pins}/{netlist.num_instances}"
            )


def _pin_xy(netlist: Netlist, locations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pin = netlist.pin_locations(locations)
    return np.ascontiguousarray(pin[:, 0]), np.ascontiguousarray(pin[:, 1])


def _weights(netlist: Netlist, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return netlist.net_weights
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (netlist.num_nets,):
        raise DimensionError(f"expected {netlist.num_nets} net weights, got {w.shape}")
    return w


def wa_wirelength(
    netlist: Netlist,
    locations: np.ndarray,
    gamma: float,
    weights: np.ndarray | None = None,
    ignore_net_degree: int = IGNORE_NET_DEGREE,
) -> float:
    """Total weighted WA wirelength over both axes."""
    _check_gamma(gamma)
    px, py = _pin_xy(netlist, locations)
    start, pins = netlist.net_csr
    return float(_wa_value_serial(px, py, start, pins, _weights(netlist, weights), float(gamma), ignore_net_degree))


def wa_gradient_serial(
    netlist: Netlist,
    locations: np.ndarray,
    gamma: float,
    weights: np.ndarray | None = None,
    ignore_net_degree: int = IGNORE_NET_DEGREE,
) -> np.ndarray:
    """Reference forces, (n_instances, 2): nets then pins, one thread."""
    _check_gamma(gamma)
    px, py = _pin_xy(netlist, locations)
    start, pins = netlist.net_csr
    return _wa_grad_serial(px, py, netlist.pin_net, netlist.pin_owner, start, pins,
                           _weights(netlist, weights), float(gamma), ignore_net_degree, netlist.num_instances)


def wa_gradient_parallel(
    netlist: Netlist,
    locations: np.ndarray,
    gamma: float,
    workspace: WAWorkspace | None = None,
    weights: np.ndarray | None = None,
    ignore_net_degree: int = IGNORE_NET_DEGREE,
    workers: int | None = None,
) -> np.ndarray:
    """Forces from the five-phase kernel; bitwise equal to :func:`wa_gradient_serial`."""
    _check_gamma(gamma)
    ws = workspace if workspace is not None else WAWorkspace.for_netlist(netlist)
    ws.check(netlist)
    px, py = _pin_xy(netlist, locations)
    net_start, net_pins = netlist.net_csr
    inst_start, inst_pins = netlist.inst_csr
    with _workers.using(workers):
        _wa_grad_parallel(px, py, netlist.pin_net, net_start, net_pins, inst_start, inst_pins,
                          _weights(netlist, weights), float(gamma), ignore_net_degree,
                          ws.xmax, ws.xmin, ws.ymax, ws.ymin, ws.bpx, ws.bmx, ws.cpx, ws.cmx,
                          ws.bpy, ws.bmy, ws.cpy, ws.cmy, ws.apx, ws.amx, ws.apy, ws.amy,
                          ws.gx, ws.gy, ws.fx, ws.fy)
    return np.stack([ws.fx, ws.fy], axis=1)
