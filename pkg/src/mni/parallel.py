"""Deterministic fan-out of replicate work across processes.

Tasks are pure functions of their arguments (all randomness is keyed), so the
only determinism requirement is that results are reassembled in task order and
that each task's numerics do not depend on the worker count.  The latter is
guaranteed by pinning BLAS to one thread inside every task, whether it runs
inline or in a pool.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from threadpoolctl import threadpool_limits


def _run_single_threaded(fn_and_args):
    fn, args = fn_and_args
    with threadpool_limits(limits=1):
        return fn(*args)


def run_indexed(fn, args_list, workers: int = 1) -> list:
    """Apply ``fn`` to every argument tuple, in order, optionally in parallel.

    Results come back in input order regardless of completion order, so any
    reduction over them is schedule-independent.
    """
    tasks = [(fn, args) for args in args_list]
    if workers <= 1 or len(tasks) <= 1:
        return [_run_single_threaded(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_single_threaded, tasks))
