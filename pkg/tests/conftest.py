import os

# Let the 2- and 8-worker kernel paths really run threaded on small machines.
os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest

from flowplace.bench import AcceleratorSpec, generate
from flowplace.netlist import Kind, NetlistBuilder, Rect


@pytest.fixture(scope="session")
def spec_4x8():
    return AcceleratorSpec()


@pytest.fixture(scope="session")
def design_4x8(spec_4x8):
    return generate(spec_4x8)


@pytest.fixture(scope="session")
def small_spec():
    return AcceleratorSpec(pu_rows=2, pes_per_pu=2, bitwidth=4, cells_per_bit=3, buffer_macros=2)


@pytest.fixture(scope="session")
def small_design(small_spec):
    return generate(small_spec)


def random_netlist(rng, n_inst=40, n_nets=30, max_deg=8, core=100.0, terminals=2, offsets=True):
    """Random connected-ish netlist with pins offset inside their owners."""
    b = NetlistBuilder(Rect(0.0, 0.0, core, core))
    sizes = rng.uniform(0.5, 3.0, (n_inst, 2))
    for i in range(n_inst):
        b.add_instance(f"top/c{i}", sizes[i, 0], sizes[i, 1])
    for t in range(terminals):
        b.add_instance(f"io/t{t}", 1.0, 1.0, Kind.TERMINAL, fixed_at=(0.0, float(rng.uniform(0, core))))
    total = n_inst + terminals
    for _ in range(n_nets):
        deg = int(rng.integers(2, max_deg + 1))
        members = rng.choice(total, size=min(deg, total), replace=False)
        conns = []
        for m in members:
            if offsets and m < n_inst:
                dx, dy = rng.uniform(-0.5, 0.5, 2) * sizes[m]
                conns.append((int(m), float(dx), float(dy)))
            else:
                conns.append(int(m))
        b.add_net(conns)
    return b.build()


def random_locations(rng, netlist, lo=0.0, hi=100.0):
    return rng.uniform(lo, hi, (netlist.num_instances, 2))
