"""Dataflow-driven analytical global placement for systolic-array netlists."""

import os as _os

# numba reads these at import time; leave room for worker-count sweeps
_os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, _os.cpu_count() or 1)))
_os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

__version__ = "0.1.0"
