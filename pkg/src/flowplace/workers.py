"""Worker-count control for the numba kernels."""

from __future__ import annotations

import contextlib
import logging
import os

import numba

log = logging.getLogger(__name__)

ENV_VAR = "FLOWPLACE_WORKERS"


def resolve(workers: int | None) -> int:
    """None -> env var (or 1); 0 -> hardware count; clamp to numba's pool."""
    if workers is None:
        workers = int(os.environ.get(ENV_VAR, "1"))
    if workers <= 0:
        workers = os.cpu_count() or 1
    limit = numba.config.NUMBA_NUM_THREADS
    if workers > limit:
        log.warning("requested %d workers, numba pool has %d", workers, limit)
        workers = limit
    return workers


@contextlib.contextmanager
def using(workers: int | None):
    prev = numba.get_num_threads()
    numba.set_num_threads(resolve(workers))
    try:
        yield
    finally:
        numba.set_num_threads(prev)
