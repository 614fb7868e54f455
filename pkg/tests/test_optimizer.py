import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowplace import optimizer
from flowplace.density import BinGrid
from flowplace.exchange import write_pl
from flowplace.hierarchy import build_clustered_netlist
from flowplace.netlist import Kind, NetlistBuilder, Rect
from flowplace.optimizer import (
    TRACE_COLUMNS,
    DivergenceMonitor,
    FlowArtifacts,
    PlacementDiverged,
    PlacerConfig,
    Trace,
    bloat_factor,
    dg_place,
    gamma_schedule,
    jitter,
    lambda_multiplier,
    make_clusters,
    nesterov_place,
    next_momentum,
    penalty_at,
    place_clusters,
    shrink_factor,
    write_trace_csv,
)


class TestPenalty:
    def test_cluster_schedule(self):
        cfg = PlacerConfig()
        assert penalty_at("cluster", 0, cfg) == pytest.approx(math.exp(4.0), rel=1e-15)
        assert penalty_at("cluster", 0, cfg) == pytest.approx(54.598150033144236)
        assert penalty_at("cluster", 4, cfg) == 1.0
        for k in range(10):
            r = penalty_at("cluster", k + 1, cfg) / penalty_at("cluster", k, cfg)
            assert r == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_divisor(self):
        cfg = PlacerConfig(penalty_divisor=10.0)
        assert penalty_at("cluster", 40, cfg) == 1.0

    def test_datapath(self):
        assert all(penalty_at("datapath", k, PlacerConfig()) == 1.0 for k in (0, 1, 100))
        cfg = PlacerConfig(datapath_decay=True)
        assert penalty_at("datapath", 2, cfg) == pytest.approx(math.exp(-2.0))

    def test_bad_input(self):
        with pytest.raises(ValueError):
            penalty_at("cluster", -1, PlacerConfig())
        with pytest.raises(ValueError):
            penalty_at("timing", 0, PlacerConfig())


class TestArithmetic:
    def test_bloat(self):
        assert bloat_factor(1e6, 250_000) == 4.0
        with pytest.raises(ValueError):
            bloat_factor(1.0, 0.0)

    def test_shrink(self):
        assert shrink_factor(0.2, 0.5) == 0.4
        with pytest.raises(ValueError):
            shrink_factor(0.2, 0.0)

    def test_gamma_bounds(self):
        assert gamma_schedule(0.1, 1.0) == pytest.approx(0.8)
        assert gamma_schedule(1.0, 1.0) == pytest.approx(80.0)
        assert gamma_schedule(5.0, 2.0) == 160.0
        assert gamma_schedule(-1.0, 2.0) == 1.6

    def test_lambda_multiplier(self):
        assert lambda_multiplier(0.1, 0.1) == pytest.approx(1.1)
        assert lambda_multiplier(0.9, 0.1) == 0.95
        assert lambda_multiplier(0.6, 0.1) == pytest.approx(1.0)

    def test_momentum(self):
        assert next_momentum(1.0) == pytest.approx((1 + math.sqrt(5)) / 2)

    def test_jitter(self):
        a = jitter(500, 0.3, 7)
        assert np.array_equal(a, jitter(500, 0.3, 7))
        assert not np.array_equal(a, jitter(500, 0.3, 8))
        assert np.abs(a).max() <= 0.3
        assert jitter(0, 1.0, 1).shape == (0, 2)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"stop_overflow": 0.0}, {"stop_overflow": 1.0}, {"target_density": 0.0},
        {"target_density": 1.5}, {"max_iterations": 0}, {"ignore_net_degree": 1},
        {"penalty_divisor": 0.0}, {"cluster_retries": -1},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            PlacerConfig(**kw)

    def test_defaults(self):
        cfg = PlacerConfig()
        assert (cfg.stop_overflow, cfg.cluster_target_overflow, cfg.iter_0) == (0.1, 0.2, 4.0)
        assert cfg.max_iterations == 5000
        assert "seed" in PlacerConfig.field_names()


def test_divergence_monitor():
    m = DivergenceMonitor(window=3, threshold=0.9)
    assert not any(m.update(t) for t in (0.91, 0.92, 0.93))
    assert m.update(0.94)
    m = DivergenceMonitor(window=3, threshold=0.9)
    seq = [0.91, 0.92, 0.93, 0.92, 0.93, 0.94]  # reset by one decrease
    assert not any(m.update(t) for t in seq)
    m = DivergenceMonitor(window=2, threshold=0.9)
    assert not any(m.update(t) for t in (0.5, 0.6, 0.7, 0.8))  # below threshold


def _quadrant_netlist():
    b = NetlistBuilder(Rect(0, 0, 64, 64))
    sites = [(8.0, 8.0), (56.0, 8.0), (8.0, 56.0), (56.0, 56.0)]
    ts = [b.add_instance(f"t{k}", 1, 1, Kind.TERMINAL, fixed_at=s) for k, s in enumerate(sites)]
    owner = []
    for k in range(4):
        for j in range(16):
            c = b.add_instance(f"g{k}/c{j}", 2, 2)
            b.add_net([c, ts[k]])
            owner.append(k)
    return b.build(), np.array(owner)


class TestNesterov:
    def test_spreads_toward_terminals(self):
        nl, owner = _quadrant_netlist()
        init = np.full((64, 2), 32.0) + np.random.default_rng(0).uniform(-0.5, 0.5, (64, 2))
        loc, tr = nesterov_place(nl, None, init, PlacerConfig(bins=16))
        assert tr.converged and tr.final_overflow <= 0.1
        q = (loc[4:, 0] > 32).astype(int) + 2 * (loc[4:, 1] > 32)
        assert (q == owner).mean() >= 0.75
        assert np.array_equal(loc[:4], nl.fixed_xy[:4])

    def test_momentum_law_in_trace(self, small_design):
        _, tr = dg_place(small_design, PlacerConfig(), False, False)
        a = tr.column("a")
        assert a[0] == 1.0
        for k in range(a.size - 1):
            assert a[k + 1] == next_momentum(a[k])

    def test_no_movables(self):
        b = NetlistBuilder(Rect(0, 0, 10, 10))
        b.add_instance("t", 1, 1, Kind.TERMINAL, fixed_at=(0.0, 5.0))
        nl = b.build()
        loc, tr = nesterov_place(nl, None, np.zeros((0, 2)), PlacerConfig())
        assert tr.converged and tr.iterations == 0
        assert np.array_equal(loc, [[0.0, 5.0]])

    def test_weight_scaling_is_invariant(self):
        # uniform x4 on every net rescales lambda_0 and the preconditioner exactly
        def build(scale):
            b = NetlistBuilder(Rect(0, 0, 64, 64))
            rng = np.random.default_rng(3)
            for i in range(60):
                b.add_instance(f"c{i}", 1.5, 1.5)
            t = b.add_instance("t", 1, 1, Kind.TERMINAL, fixed_at=(0.0, 20.0))
            for _ in range(50):
                m = rng.choice(60, size=int(rng.integers(2, 6)), replace=False)
                b.add_net([int(x) for x in m], weight=scale * float(rng.uniform(0.5, 2)))
            b.add_net([0, t], weight=scale)
            return b.build()

        init = np.full((60, 2), 32.0) + jitter(60, 0.5, 1)
        cfg = PlacerConfig(bins=16)
        l1, t1 = nesterov_place(build(1.0), None, init, cfg)
        l4, t4 = nesterov_place(build(4.0), None, init, cfg)
        assert np.array_equal(l1, l4)
        assert t1.iterations == t4.iterations

    def test_iteration_cap(self, small_design):
        _, tr = dg_place(small_design, PlacerConfig(max_iterations=3), False, False)
        assert tr.hit_max_iterations and not tr.converged
        assert tr.iterations == 3

    def test_callback(self, small_design):
        seen = []
        dg_place(small_design, PlacerConfig(max_iterations=4), False, False,
                 callback=lambda k, loc: seen.append((k, loc.shape[0])))
        assert [k for k, _ in seen] == [0, 1, 2, 3]
        assert all(n >= small_design.num_instances for _, n in seen)

    def test_overflow_trend(self, small_design):
        _, tr = dg_place(small_design, PlacerConfig(), False, False)
        tau = tr.column("overflow")
        w = 5
        smooth = np.convolve(tau, np.ones(w) / w, mode="valid")
        assert smooth[-1] < smooth[0]
        slope = np.polyfit(np.arange(smooth.size), smooth, 1)[0]
        assert slope < 0


@pytest.mark.parametrize("flags", [(True, True), (False, False)])
def test_smoothed_overflow_nonincreasing_4x8(design_4x8, flags):
    _, tr = dg_place(design_4x8, PlacerConfig(), *flags)
    tau = tr.column("overflow")
    smooth = np.convolve(tau, np.ones(50) / 50, mode="valid")  # smooth[j] ends at iteration j + 49
    tail = smooth[100 - 49:]
    assert tr.converged
    assert np.all(np.diff(tail) <= 0)


def test_trace_csv(tmp_path):
    tr = Trace(rows=[{"iter": 0, "overflow": 0.5, "hpwl": 10.0, "lambda": 1e-3, "gamma": 2.0,
                      "penalty_cluster": 54.6, "a": 1.0, "step": 0.1}])
    p = tmp_path / "t.csv"
    write_trace_csv(tr, p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert lines[0] == "iter,overflow,hpwl,lambda,gamma,penalty_cluster"
    assert lines[1].split(",")[0] == "0"
    assert len(lines) == 2


class TestClusterPlacement:
    def test_retries_after_divergence(self, small_design, monkeypatch):
        calls = []

        def fake(nl, pseudo, init, cfg, **kw):
            calls.append(1)
            tau = 0.9 if len(calls) < 3 else 0.15
            if len(calls) < 3:
                raise PlacementDiverged(tau, nl.full_locations(init), Trace())
            tr = Trace(rows=[{"overflow": tau}], converged=True)
            return nl.full_locations(init), tr

        monkeypatch.setattr(optimizer, "nesterov_place", fake)
        cfg = PlacerConfig()
        cnl = build_clustered_netlist(small_design, make_clusters(small_design, cfg))
        cp = place_clusters(cnl, cfg)
        assert len(calls) == 3 and len(cp.attempts) == 3
        assert cp.overflow == 0.15
        raw = np.array([c.total_area for c in cnl.clusters])
        first = raw * bloat_factor(small_design.core.area, raw.sum())
        np.testing.assert_allclose(cp.areas, first * shrink_factor(0.2, 0.9) ** 2)

    def test_gives_up_and_keeps_best(self, small_design, monkeypatch):
        taus = iter([0.5, 0.3, 0.4, 0.6])

        def fake(nl, pseudo, init, cfg, **kw):
            return nl.full_locations(init), Trace(rows=[{"overflow": next(taus)}])

        monkeypatch.setattr(optimizer, "nesterov_place", fake)
        cfg = PlacerConfig()
        cnl = build_clustered_netlist(small_design, make_clusters(small_design, cfg))
        cp = place_clusters(cnl, cfg)
        assert cp.overflow == 0.3 and len(cp.attempts) == 4

    def test_4x8_reaches_target(self, design_4x8):
        cfg = PlacerConfig()
        cnl = build_clustered_netlist(design_4x8, make_clusters(design_4x8, cfg))
        cp = place_clusters(cnl, cfg)
        assert cp.overflow <= cfg.cluster_target_overflow
        core = design_4x8.core
        assert np.all((cp.centers >= [core.lx, core.ly]) & (cp.centers <= [core.ux, core.uy]))


class TestFlow:
    def test_deterministic(self, small_design, tmp_path):
        outs = []
        for k in range(2):
            loc, _ = dg_place(small_design, PlacerConfig())
            write_pl(small_design, loc, tmp_path / f"{k}.pl")
            outs.append((tmp_path / f"{k}.pl").read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_result(self, small_design):
        a, _ = dg_place(small_design, PlacerConfig(seed=1))
        b, _ = dg_place(small_design, PlacerConfig(seed=2))
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("df,dp", [(True, True), (False, True), (True, False), (False, False)])
    def test_arms_converge(self, small_design, df, dp):
        art = FlowArtifacts()
        loc, tr = dg_place(small_design, PlacerConfig(), df, dp, artifacts=art)
        assert tr.converged and tr.final_overflow <= 0.1
        assert loc.shape == (small_design.num_instances, 2)
        core = small_design.core
        assert np.all(loc >= [core.lx, core.ly]) and np.all(loc <= [core.ux, core.uy])
        if df or dp:
            assert art.clusters and art.cluster_placement is not None
            assert {"extraction", "cluster_place", "flat_place"} <= set(tr.stages)
            assert art.placed_netlist.num_nets > small_design.num_nets
        else:
            assert not art.clusters and set(tr.stages) == {"flat_place"}
        fixed = ~small_design.movable
        assert np.array_equal(loc[fixed], small_design.fixed_xy[fixed])

    def test_first_penalty(self, small_design):
        _, tr = dg_place(small_design, PlacerConfig())
        assert tr.column("penalty_cluster")[0] == pytest.approx(math.exp(4.0))


@settings(max_examples=30, deadline=None)
@given(tau=st.floats(-1, 3, allow_nan=False), bw=st.floats(0.01, 100))
def test_gamma_clamped(tau, bw):
    g = gamma_schedule(tau, bw)
    assert 0.8 * bw * (1 - 1e-12) <= g <= 80 * bw * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(t1=st.floats(0, 2), t2=st.floats(0, 2))
def test_lambda_multiplier_monotone(t1, t2):
    lo, hi = sorted((t1, t2))
    assert lambda_multiplier(lo, 0.1) >= lambda_multiplier(hi, 0.1)
    assert 0.95 <= lambda_multiplier(t1, 0.1) <= 1.1


def test_bin_grid_for_netlist(small_design):
    g = BinGrid.for_netlist(small_design, 0.7, None)
    assert g.nx == g.ny and g.nx & (g.nx - 1) == 0
