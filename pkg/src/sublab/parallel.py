"""Ordered map over independent tasks, optionally on a process pool."""
from concurrent.futures import ProcessPoolExecutor


def map_ordered(func, tasks, workers=1):
    """Results in task order, so reductions are reproducible at any parallelism."""
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) < 2:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
