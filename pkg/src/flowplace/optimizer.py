"""Nesterov electrostatic placement, pseudo-net penalties, cluster placement and the full flow.

The objective is ``WA(x) + lambda * N(x)`` where ``N`` is the electrostatic
energy. Steps are Jacobi-preconditioned and sized by a Lipschitz estimate
with backtracking, in the ePlace style.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.stats import qmc

from . import density as dens
from .datapath import build_datapath_pseudonets, extract_alignment_groups
from .dataflow import inject_virtual_connections, register_hop_bfs
from .hierarchy import (
    Cluster,
    ClusteredNetlist,
    build_clustered_netlist,
    default_bounds,
    extract_hierarchy,
)
from .netlist import Kind, Netlist, NetlistBuilder, StarFragment, apply_stars, hpwl, star_decompose
from .wirelength import IGNORE_NET_DEGREE, WAWorkspace, wa_gradient_parallel

log = logging.getLogger(__name__)

CLUSTER, DATAPATH = 0, 1
_KIND_CODE = {"cluster": CLUSTER, "datapath": DATAPATH}

TRACE_COLUMNS = ("iter", "overflow", "hpwl", "lambda", "gamma", "penalty_cluster")


class PlacementDiverged(RuntimeError):
    """Overflow kept rising while near 1; carries the last state for retries."""

    def __init__(self, overflow: float, locations: np.ndarray, trace: "Trace") -> None:
        super().__init__(f"placement diverged at overflow {overflow:.4f}")
        self.overflow = overflow
        self.locations = locations
        self.trace = trace


@dataclass
class PlacerConfig:
    stop_overflow: float = 0.1
    cluster_target_overflow: float = 0.2
    iter_0: float = 4.0
    max_iterations: int = 5000
    ignore_net_degree: int = IGNORE_NET_DEGREE
    target_density: float = 0.7
    seed: int = 1
    penalty_divisor: float = 1.0  # iterations per unit of the cluster-penalty exponent
    datapath_decay: bool = False
    cluster_max_iterations: int = 1000
    cluster_target_density: float = 1.0
    cluster_retries: int = 3
    min_cluster_size: int | None = None
    max_cluster_size: int | None = None
    bins: int | None = None
    divergence_window: int = 100
    divergence_overflow: float = 0.95
    workers: int | None = None

    def __post_init__(self) -> None:
        for name in ("stop_overflow", "cluster_target_overflow"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        for name in ("target_density", "cluster_target_density"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.max_iterations < 1 or self.cluster_max_iterations < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.ignore_net_degree < 2:
            raise ValueError("ignore_net_degree must be >= 2")
        if self.penalty_divisor <= 0:
            raise ValueError("penalty_divisor must be > 0")
        if self.cluster_retries < 0:
            raise ValueError("cluster_retries must be >= 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# -- pseudo nets ----------------------------------------------------------------


def penalty_at(kind: str, k: int, cfg: PlacerConfig) -> float:
    """Pseudo-net weight at flat iteration ``k``."""
    if k < 0:
        raise ValueError("iteration must be >= 0")
    if kind == "cluster":
        return math.exp(cfg.iter_0 - k / cfg.penalty_divisor)
    if kind == "datapath":
        return math.exp(-k / cfg.penalty_divisor) if cfg.datapath_decay else 1.0
    raise ValueError(f"unknown pseudo-net kind {kind!r}")


@dataclass
class PseudoNetSet:
    """Pseudo nets inside an augmented netlist, with their kind."""

    net_ids: np.ndarray
    kinds: np.ndarray
    centers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @classmethod
    def empty(cls) -> "PseudoNetSet":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int8))

    @classmethod
    def attach(cls, netlist: Netlist, fragments: list[StarFragment]) -> tuple[Netlist, "PseudoNetSet"]:
        """Append star fragments to the netlist and index the resulting nets."""
        if not fragments:
            return netlist, cls.empty()
        aug, centers = apply_stars(netlist, fragments)
        n0 = netlist.num_nets
        kinds = np.concatenate([np.full(f.num_nets, _KIND_CODE[f.kind], dtype=np.int8) for f in fragments])
        ids = np.arange(n0, n0 + kinds.size, dtype=np.int64)
        return aug, cls(ids, kinds, centers)

    def weights_at(self, base: np.ndarray, k: int, cfg: PlacerConfig) -> np.ndarray:
        """Design weights unchanged; pseudo weights follow the penalty schedule."""
        w = base.copy()
        if self.net_ids.size:
            cl = self.net_ids[self.kinds == CLUSTER]
            dp = self.net_ids[self.kinds == DATAPATH]
            w[cl] = penalty_at("cluster", k, cfg)
            w[dp] = penalty_at("datapath", k, cfg)
        return w


# -- trace ----------------------------------------------------------------------


@dataclass
class Trace:
    rows: list[dict] = field(default_factory=list)
    converged: bool = False
    hit_max_iterations: bool = False
    stages: dict[str, float] = field(default_factory=dict)
    cluster_attempts: list["Trace"] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def iterations(self) -> int:
        return len(self.rows)

    @property
    def final_overflow(self) -> float:
        return self.rows[-1]["overflow"] if self.rows else 0.0


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for r in trace.rows:
            fh.write(",".join(_fmt(r[c]) for c in TRACE_COLUMNS) + "\n")


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else f"{v:.10g}"


# -- schedules --------------------------------------------------------------------


def gamma_schedule(overflow: float, bin_w: float) -> float:
    g = 8.0 * bin_w * 10.0 ** ((overflow - 0.1) * (2.0 / 0.9) - 1.0)
    return float(min(80.0 * bin_w, max(0.8 * bin_w, g)))


def lambda_multiplier(overflow: float, stop_overflow: float) -> float:
    mu = 1.1 ** (1.0 - 2.0 * (overflow - stop_overflow))
    return float(min(1.1, max(0.95, mu)))


def next_momentum(a: float) -> float:
    return (1.0 + math.sqrt(4.0 * a * a + 1.0)) / 2.0


# -- Nesterov engine ----------------------------------------------------------------


class DivergenceMonitor:
    """Flags ``window`` consecutive overflow increases, all above ``threshold``."""

    def __init__(self, window: int, threshold: float) -> None:
        self.window = window
        self.threshold = threshold
        self.rising = 0
        self.prev: float | None = None

    def update(self, overflow: float) -> bool:
        if self.prev is not None and overflow > self.threshold and overflow > self.prev:
            self.rising += 1
        else:
            self.rising = 0
        self.prev = overflow
        return self.rising >= self.window


class _Problem:
    """Gradient/overflow evaluation on the movable coordinates of one netlist."""

    def __init__(self, netlist: Netlist, cfg: PlacerConfig, target_density: float) -> None:
        self.nl = netlist
        self.cfg = cfg
        self.mov = netlist.movable_ids
        self.grid = dens.BinGrid.for_netlist(netlist, target_density, cfg.bins)
        self.charges = dens.ChargeModel.build(netlist, self.grid)
        self.ws = WAWorkspace.for_netlist(netlist)
        deg = netlist.net_degree
        self.active = (deg >= 2) & (deg <= cfg.ignore_net_degree)
        core = netlist.core
        hw = 0.5 * self.charges.width[self.mov]
        hh = 0.5 * self.charges.height[self.mov]
        self.lo = np.stack([core.lx + hw, core.ly + hh], axis=1)
        self.hi = np.stack([core.ux - hw, core.uy - hh], axis=1)
        self.design_nets = ~netlist.net_is_pseudo

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def full(self, x: np.ndarray, base: np.ndarray) -> np.ndarray:
        out = base.copy()
        out[self.mov] = x
        return out

    def forces(self, full: np.ndarray, weights: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray, float]:
        f_wl = wa_gradient_parallel(self.nl, full, gamma, self.ws, weights=weights,
                                    ignore_net_degree=self.cfg.ignore_net_degree, workers=self.cfg.workers)
        dens.deposit(self.nl, full, self.grid, self.charges)
        dens.solve_potential(self.grid)
        f_d = dens.density_force(self.nl, full, self.grid, self.charges)
        return f_wl[self.mov], f_d[self.mov], dens.overflow(self.grid)

    def precond(self, weights: np.ndarray, lam: float) -> np.ndarray:
        w = np.where(self.active, weights, 0.0)
        pin_w = np.bincount(self.nl.pin_owner, weights=w[self.nl.pin_net], minlength=self.nl.num_instances)
        p = pin_w[self.mov] + lam * self.charges.charge[self.mov]
        return np.maximum(p, np.finfo(float).tiny)[:, None]

    def hpwl(self, full: np.ndarray) -> float:
        return hpwl(self.nl, full, include_pseudo=False)


def nesterov_place(
    netlist: Netlist,
    pseudo: PseudoNetSet | None,
    init_locations: np.ndarray,
    cfg: PlacerConfig,
    *,
    stop_overflow: float | None = None,
    max_iterations: int | None = None,
    target_density: float | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, Trace]:
    """Minimise WA + lambda * density from ``init_locations``.

    Returns full (n_instances, 2) locations and the per-iteration trace.
    Raises :class:`PlacementDiverged` when overflow rises for
    ``cfg.divergence_window`` consecutive iterations above
    ``cfg.divergence_overflow``. ``callback(k, locations)`` runs once per
    iteration before the step.
    """
    pseudo = pseudo or PseudoNetSet.empty()
    stop = cfg.stop_overflow if stop_overflow is None else stop_overflow
    max_it = cfg.max_iterations if max_iterations is None else max_iterations
    td = cfg.target_density if target_density is None else target_density
    base = netlist.full_locations(init_locations)
    trace = Trace()
    if netlist.movable_ids.size == 0:
        trace.converged = True
        return base, trace

    prob = _Problem(netlist, cfg, td)
    base_w = netlist.net_weights
    bin_w = prob.grid.bin_w

    v = prob.clamp(base[prob.mov])
    u = v.copy()
    w = pseudo.weights_at(base_w, 0, cfg)
    dens.deposit(netlist, prob.full(v, base), prob.grid, prob.charges)
    gamma = gamma_schedule(dens.overflow(prob.grid), bin_w)

    f_wl, f_d, tau = prob.forces(prob.full(v, base), w, gamma)
    sd = np.abs(f_d).sum()
    lam = float(np.abs(f_wl).sum() / sd) if sd > 0 else 1.0
    if not lam > 0:
        lam = 1.0

    def grad(fw, fd, lam_, w_):
        g = -(fw + lam_ * fd)
        return g / prob.precond(w_, lam_)

    g = grad(f_wl, f_d, lam, w)

    # initial step from a small probe along the gradient
    gmax = float(np.abs(g).max())
    delta = 0.1 * bin_w
    if gmax > 0:
        v_probe = prob.clamp(v - delta * g / gmax)
        fw_p, fd_p, _ = prob.forces(prob.full(v_probe, base), w, gamma)
        dg = np.linalg.norm(grad(fw_p, fd_p, lam, w) - g)
        dv = np.linalg.norm(v - v_probe)
        step = float(dv / dg) if dg > 0 and dv > 0 else delta / gmax
    else:
        step = delta

    a = 1.0
    monitor = DivergenceMonitor(cfg.divergence_window, cfg.divergence_overflow)
    for k in range(max_it):
        full_v = prob.full(v, base)
        trace.rows.append({
            "iter": k, "overflow": float(tau), "hpwl": prob.hpwl(full_v), "lambda": lam, "gamma": gamma,
            "penalty_cluster": penalty_at("cluster", k, cfg), "a": a, "step": step,
        })
        if callback is not None:
            callback(k, full_v)
        if not np.isfinite(tau) or not np.all(np.isfinite(v)):
            raise PlacementDiverged(float("inf"), full_v, trace)
        if tau <= stop:
            trace.converged = True
            return full_v, trace
        if monitor.update(tau):
            raise PlacementDiverged(float(tau), full_v, trace)
        if k == max_it - 1:
            break

        w_next = pseudo.weights_at(base_w, k + 1, cfg)
        a_next = next_momentum(a)
        coef = (a - 1.0) / a_next
        for _ in range(10):
            u_new = prob.clamp(v - step * g)
            v_new = prob.clamp(u_new + coef * (u_new - u))
            fw_n, fd_n, tau_n = prob.forces(prob.full(v_new, base), w_next, gamma)
            g_new = grad(fw_n, fd_n, lam, w_next)
            dg = np.linalg.norm(g_new - g)
            dv = np.linalg.norm(v_new - v)
            est = float(dv / dg) if dg > 0 else step
            if est >= 0.95 * step or dv == 0:
                break
            step = est
        u, v, g, a, tau = u_new, v_new, g_new, a_next, tau_n
        if est > 0:
            step = est
        lam *= lambda_multiplier(tau, stop)
        gamma = gamma_schedule(tau, bin_w)

    trace.hit_max_iterations = True
    return prob.full(v, base), trace


# -- cluster placement ---------------------------------------------------------------


def bloat_factor(core_area: float, cluster_area: float) -> float:
    if cluster_area <= 0:
        raise ValueError("total cluster area must be > 0")
    return core_area / cluster_area


def shrink_factor(target_overflow: float, cluster_overflow: float) -> float:
    if cluster_overflow <= 0:
        raise ValueError("cluster overflow must be > 0")
    return target_overflow / cluster_overflow


def jitter(n: int, scale: float, seed: int) -> np.ndarray:
    """Scrambled-Halton offsets in [-scale, scale)^2, reproducible per seed."""
    if n == 0:
        return np.zeros((0, 2))
    pts = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    return (2.0 * pts - 1.0) * scale


def cluster_netlist(cnl: ClusteredNetlist, areas: np.ndarray) -> tuple[Netlist, np.ndarray]:
    """Clusters as square movables, terminals fixed; returns netlist and fixed-location array."""
    origin = cnl.origin
    b = NetlistBuilder(origin.core, origin.row_height)
    for c, area in zip(cnl.clusters, areas):
        side = math.sqrt(area)
        b.add_instance(c.label or f"cluster{c.id}", side, side, Kind.STD_CELL)
    for t in cnl.terminals:
        inst = origin.instances[t]
        b.add_instance(inst.name, inst.width, inst.height, Kind.TERMINAL, fixed_at=inst.fixed_at)
    for net in cnl.bundled_nets:
        b.add_net(list(net.endpoints), weight=net.weight)
    nl = b.build()
    return nl, nl.fixed_xy


@dataclass
class ClusterPlacement:
    centers: np.ndarray  # (C, 2)
    areas: np.ndarray
    overflow: float
    attempts: list[Trace]


def place_clusters(cnl: ClusteredNetlist, cfg: PlacerConfig) -> ClusterPlacement:
    """Place bloated soft clusters, shrinking and retrying when the target is missed."""
    core = cnl.origin.core
    raw = np.array([c.total_area for c in cnl.clusters], dtype=float)
    areas = raw * bloat_factor(core.area, raw.sum())
    target = cfg.cluster_target_overflow
    best: ClusterPlacement | None = None
    attempts: list[Trace] = []
    for attempt in range(cfg.cluster_retries + 1):
        nl, fixed = cluster_netlist(cnl, areas)
        init = np.tile(core.center, (nl.num_instances, 1))
        grid_w = core.width / (cfg.bins or dens.default_bins(len(cnl.clusters)))
        init[: len(cnl.clusters)] += jitter(len(cnl.clusters), 0.01 * grid_w, cfg.seed + attempt)
        init[~nl.movable] = fixed[~nl.movable]
        try:
            loc, tr = nesterov_place(nl, None, init, cfg, stop_overflow=target,
                                     max_iterations=cfg.cluster_max_iterations,
                                     target_density=cfg.cluster_target_density)
            tau = tr.final_overflow
        except PlacementDiverged as exc:
            loc, tr, tau = exc.locations, exc.trace, exc.overflow
            log.info("cluster placement attempt %d diverged at overflow %.3f", attempt, tau)
        attempts.append(tr)
        result = ClusterPlacement(loc[: len(cnl.clusters)].copy(), areas.copy(), float(tau), attempts)
        if best is None or tau < best.overflow:
            best = result
        if tau <= target:
            break
        if attempt == cfg.cluster_retries:
            log.warning("cluster placement missed overflow %.2f after %d retries (best %.3f)",
                        target, cfg.cluster_retries, best.overflow)
            break
        areas = areas * shrink_factor(target, tau)
    best.attempts = attempts
    return best


# -- full flow ------------------------------------------------------------------------


@dataclass
class FlowArtifacts:
    """Intermediate products of :func:`dg_place`, kept for reports and plots."""

    clusters: list[Cluster] = field(default_factory=list)
    num_virtual: int = 0
    num_groups: int = 0
    cluster_placement: ClusterPlacement | None = None
    placed_netlist: Netlist | None = None


def make_clusters(netlist: Netlist, cfg: PlacerConfig) -> list[Cluster]:
    lo, hi = default_bounds(int(netlist.movable.sum()))
    lo = cfg.min_cluster_size or lo
    hi = cfg.max_cluster_size or hi
    return extract_hierarchy(netlist, min(lo, hi), hi)


def dg_place(
    netlist: Netlist,
    cfg: PlacerConfig,
    use_dataflow: bool = True,
    use_datapath: bool = True,
    artifacts: FlowArtifacts | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, Trace]:
    """Hierarchy, cluster placement and constrained flat placement.

    With both flags off this is the plain flow from the core center.
    Returns locations for the instances of ``netlist`` and the flat trace,
    whose ``stages`` hold per-stage wall times.
    """
    art = artifacts if artifacts is not None else FlowArtifacts()
    stages: dict[str, float] = {}
    core = netlist.core
    mov = netlist.movable_ids
    flat_bin = core.width / (cfg.bins or dens.default_bins(mov.size))
    init = netlist.full_locations(np.tile(core.center, (mov.size, 1)))
    offsets = jitter(mov.size, 0.01 * flat_bin, cfg.seed)
    fragments: list[StarFragment] = []

    if use_dataflow or use_datapath:
        t0 = time.perf_counter()
        clusters = make_clusters(netlist, cfg)
        cnl = build_clustered_netlist(netlist, clusters)
        if use_dataflow:
            edges = register_hop_bfs(netlist, clusters)
            cnl = inject_virtual_connections(cnl, edges)
            art.num_virtual = len(edges)
        groups = extract_alignment_groups(netlist, clusters) if use_datapath else []
        art.clusters = clusters
        art.num_groups = len(groups)
        stages["extraction"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        cp = place_clusters(cnl, cfg)
        art.cluster_placement = cp
        for c, xy in zip(clusters, cp.centers):
            init[c.members] = xy
        stages["cluster_place"] = time.perf_counter() - t0

        p0 = math.exp(cfg.iter_0)
        fragments += [star_decompose(c.members, p0, kind="cluster") for c in clusters if c.size >= 2]
        fragments += build_datapath_pseudonets(groups)

    init[mov] += offsets
    t0 = time.perf_counter()
    aug, pseudo = PseudoNetSet.attach(netlist, fragments)
    aug_init = aug.full_locations(np.concatenate([init, _star_init(init, fragments)]))
    loc, trace = nesterov_place(aug, pseudo, aug_init, cfg, callback=callback)
    stages["flat_place"] = time.perf_counter() - t0
    art.placed_netlist = aug
    trace.stages = stages
    if art.cluster_placement is not None:
        trace.cluster_attempts = art.cluster_placement.attempts
    return loc[: netlist.num_instances], trace


def _star_init(init: np.ndarray, fragments: list[StarFragment]) -> np.ndarray:
    """Star centers start at their members' centroid."""
    out = np.empty((len(fragments), 2))
    for s, f in enumerate(fragments):
        out[s] = init[list(f.members)].mean(axis=0)
    return out


def with_overrides(cfg: PlacerConfig, **kw) -> PlacerConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
