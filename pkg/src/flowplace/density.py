"""Electrostatic density: bin grid, charge deposition, Poisson solve, forces, overflow.

The potential solves the 5-point discrete Poisson equation
``lap(psi) = -(rho - mean(rho))`` with mirror (zero normal derivative)
boundaries. Its eigenbasis is the type-II DCT, so one forward and one
inverse ``dctn`` give the exact discrete solution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import fft

from .netlist import Kind, Netlist, Rect

log = logging.getLogger(__name__)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def default_bins(num_movable: int) -> int:
    """Smallest power of two >= sqrt(n), clamped to [16, 1024]."""
    n = 1 << max(0, math.ceil(math.log2(max(1.0, math.sqrt(num_movable)))))
    return int(min(1024, max(16, n)))


@dataclass
class BinGrid:
    core: Rect
    nx: int
    ny: int
    target_density: float = 1.0
    rho: np.ndarray = field(init=False, repr=False)
    psi: np.ndarray = field(init=False, repr=False)
    field_x: np.ndarray = field(init=False, repr=False)
    field_y: np.ndarray = field(init=False, repr=False)
    total_charge: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        if not (_is_pow2(self.nx) and _is_pow2(self.ny)):
            raise ValueError(f"bin counts must be powers of two, got {self.nx}x{self.ny}")
        if not 0 < self.target_density <= 1:
            raise ValueError("target density must lie in (0, 1]")
        self.rho = np.zeros((self.nx, self.ny))
        self.psi = np.zeros((self.nx, self.ny))
        self.field_x = np.zeros((self.nx, self.ny))
        self.field_y = np.zeros((self.nx, self.ny))
        kx = np.arange(self.nx)
        ky = np.arange(self.ny)
        lam_x = (2.0 * np.cos(np.pi * kx / self.nx) - 2.0) / self.bin_w**2
        lam_y = (2.0 * np.cos(np.pi * ky / self.ny) - 2.0) / self.bin_h**2
        eig = lam_x[:, None] + lam_y[None, :]
        eig[0, 0] = 1.0
        self._inv_eig = 1.0 / eig
        self._inv_eig[0, 0] = 0.0

    @property
    def bin_w(self) -> float:
        return self.core.width / self.nx

    @property
    def bin_h(self) -> float:
        return self.core.height / self.ny

    @property
    def bin_area(self) -> float:
        return self.bin_w * self.bin_h

    @classmethod
    def for_netlist(cls, netlist: Netlist, target_density: float = 1.0, bins: int | None = None) -> "BinGrid":
        n = bins or default_bins(int(netlist.movable.sum()))
        return cls(netlist.core, n, n, target_density)


# -- per-instance charge model ---------------------------------------------------


@dataclass
class ChargeModel:
    """Effective footprint and charge scaling per instance for one grid."""

    width: np.ndarray
    height: np.ndarray
    scale: np.ndarray  # charge per unit footprint area; 0 for non-depositing
    charge: np.ndarray  # total deposited area per instance

    @classmethod
    def build(cls, netlist: Netlist, grid: BinGrid) -> "ChargeModel":
        w = netlist.sizes[:, 0].copy()
        h = netlist.sizes[:, 1].copy()
        kind = netlist.kind
        deposits = (kind == Kind.STD_CELL) | (kind == Kind.MACRO)
        base = np.where(kind == Kind.MACRO, grid.target_density, 1.0) * w * h
        base[~deposits] = 0.0
        # small footprints are inflated to a bin, keeping the deposited area
        we = np.where(deposits, np.maximum(w, grid.bin_w), 0.0)
        he = np.where(deposits, np.maximum(h, grid.bin_h), 0.0)
        we = np.minimum(we, grid.core.width)
        he = np.minimum(he, grid.core.height)
        foot = we * he
        scale = np.divide(base, foot, out=np.zeros_like(base), where=foot > 0)
        return cls(we, he, scale, base)


@njit(cache=True)
def _deposit(xs, ys, we, he, scale, lx, ly, bw, bh, nx, ny, out):
    for v in range(xs.size):
        s = scale[v]
        if s == 0.0:
            continue
        x0 = xs[v] - 0.5 * we[v]
        x1 = xs[v] + 0.5 * we[v]
        y0 = ys[v] - 0.5 * he[v]
        y1 = ys[v] + 0.5 * he[v]
        i0 = max(0, int(math.floor((x0 - lx) / bw)))
        i1 = min(nx - 1, int(math.floor((x1 - lx) / bw)))
        j0 = max(0, int(math.floor((y0 - ly) / bh)))
        j1 = min(ny - 1, int(math.floor((y1 - ly) / bh)))
        for i in range(i0, i1 + 1):
            bx0 = lx + i * bw
            ox = min(x1, bx0 + bw) - max(x0, bx0)
            if ox <= 0.0:
                continue
            for j in range(j0, j1 + 1):
                by0 = ly + j * bh
                oy = min(y1, by0 + bh) - max(y0, by0)
                if oy > 0.0:
                    out[i, j] += s * ox * oy


@njit(cache=True)
def _footprint_force(xs, ys, we, he, scale, lx, ly, bw, bh, nx, ny, ex, ey, out):
    for v in range(xs.size):
        s = scale[v]
        out[v, 0] = 0.0
        out[v, 1] = 0.0
        if s == 0.0:
            continue
        x0 = xs[v] - 0.5 * we[v]
        x1 = xs[v] + 0.5 * we[v]
        y0 = ys[v] - 0.5 * he[v]
        y1 = ys[v] + 0.5 * he[v]
        i0 = max(0, int(math.floor((x0 - lx) / bw)))
        i1 = min(nx - 1, int(math.floor((x1 - lx) / bw)))
        j0 = max(0, int(math.floor((y0 - ly) / bh)))
        j1 = min(ny - 1, int(math.floor((y1 - ly) / bh)))
        fx = 0.0
        fy = 0.0
        for i in range(i0, i1 + 1):
            bx0 = lx + i * bw
            ox = min(x1, bx0 + bw) - max(x0, bx0)
            if ox <= 0.0:
                continue
            for j in range(j0, j1 + 1):
                by0 = ly + j * bh
                oy = min(y1, by0 + bh) - max(y0, by0)
                if oy > 0.0:
                    q = s * ox * oy
                    fx += q * ex[i, j]
                    fy += q * ey[i, j]
        out[v, 0] = fx
        out[v, 1] = fy


def clamp_to_core(locations: np.ndarray, charges: ChargeModel, core: Rect) -> np.ndarray:
    """Shift centers so each effective footprint lies inside the core."""
    loc = np.array(locations, dtype=np.float64, copy=True)
    hw, hh = 0.5 * charges.width, 0.5 * charges.height
    loc[:, 0] = np.clip(loc[:, 0], core.lx + hw, core.ux - hw)
    loc[:, 1] = np.clip(loc[:, 1], core.ly + hh, core.uy - hh)
    return loc


def deposit(netlist: Netlist, locations: np.ndarray, grid: BinGrid, charges: ChargeModel | None = None) -> BinGrid:
    """Spread each movable's charge over the bins its (inflated) footprint overlaps."""
    charges = charges or ChargeModel.build(netlist, grid)
    full = netlist.full_locations(locations)
    outside = (
        (full[:, 0] + 0.5 * charges.width < grid.core.lx) | (full[:, 0] - 0.5 * charges.width > grid.core.ux)
        | (full[:, 1] + 0.5 * charges.height < grid.core.ly) | (full[:, 1] - 0.5 * charges.height > grid.core.uy)
    ) & (charges.scale > 0)
    if outside.any():
        log.warning("%d instances lie fully outside the core; clamped", int(outside.sum()))
    loc = clamp_to_core(full, charges, grid.core)
    grid.rho.fill(0.0)
    c = grid.core
    _deposit(loc[:, 0], loc[:, 1], charges.width, charges.height, charges.scale,
             c.lx, c.ly, grid.bin_w, grid.bin_h, grid.nx, grid.ny, grid.rho)
    grid.rho /= grid.bin_area
    grid.total_charge = float(charges.charge.sum())
    return grid


def solve_potential(grid: BinGrid) -> BinGrid:
    src = grid.rho - grid.rho.mean()
    coef = fft.dctn(src, type=2, norm="ortho")
    coef *= -grid._inv_eig
    psi = fft.idctn(coef, type=2, norm="ortho")
    psi -= psi.mean()
    grid.psi = psi
    # mirror ghosts: psi[-1] = psi[0], psi[n] = psi[n-1]
    pad = np.pad(psi, 1, mode="edge")
    grid.field_x = -(pad[2:, 1:-1] - pad[:-2, 1:-1]) / (2.0 * grid.bin_w)
    grid.field_y = -(pad[1:-1, 2:] - pad[1:-1, :-2]) / (2.0 * grid.bin_h)
    return grid


def laplacian(psi: np.ndarray, bin_w: float, bin_h: float) -> np.ndarray:
    """5-point Laplacian with mirror boundaries."""
    pad = np.pad(psi, 1, mode="edge")
    d2x = (pad[2:, 1:-1] - 2.0 * psi + pad[:-2, 1:-1]) / bin_w**2
    d2y = (pad[1:-1, 2:] - 2.0 * psi + pad[1:-1, :-2]) / bin_h**2
    return d2x + d2y


def density_force(
    netlist: Netlist, locations: np.ndarray, grid: BinGrid, charges: ChargeModel | None = None
) -> np.ndarray:
    """Charge times field, averaged over each footprint; (n_instances, 2).

    For a bin-sized footprint the overlap-weighted average is exactly the
    bilinear interpolation of the field at the instance center.
    """
    charges = charges or ChargeModel.build(netlist, grid)
    loc = clamp_to_core(netlist.full_locations(locations), charges, grid.core)
    out = np.empty((netlist.num_instances, 2))
    c = grid.core
    _footprint_force(loc[:, 0], loc[:, 1], charges.width, charges.height, charges.scale,
                     c.lx, c.ly, grid.bin_w, grid.bin_h, grid.nx, grid.ny,
                     grid.field_x, grid.field_y, out)
    return out


def energy(grid: BinGrid) -> float:
    """Discrete electrostatic energy 1/2 sum(q_b psi_b)."""
    return 0.5 * float(np.sum(grid.rho * grid.psi)) * grid.bin_area


def overflow(grid: BinGrid) -> float:
    """Excess bin area above target, over the total deposited area."""
    if grid.total_charge <= 0:
        return 0.0
    excess = np.maximum(0.0, grid.rho - grid.target_density).sum() * grid.bin_area
    return float(excess / grid.total_charge)
