"""Shared helpers: bounded worker pool and deterministic reductions."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def n_workers(requested: int | None = None) -> int:
    """Worker count: explicit argument, else HEATPARA_THREADS, else 1."""
    if requested is not None and requested > 0:
        return requested
    env = os.environ.get("HEATPARA_THREADS", "")
    if env.isdigit() and int(env) > 0:
        return int(env)
    return 1


def parallel_map(fn, jobs, workers: int | None = None) -> list:
    """Map fn over jobs with a bounded thread pool.

    Results come back in job order regardless of completion order, so
    reductions downstream are deterministic.  numpy/scipy kernels release
    the GIL, which is where the time goes.
    """
    w = n_workers(workers)
    jobs = list(jobs)
    if w <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, jobs))
