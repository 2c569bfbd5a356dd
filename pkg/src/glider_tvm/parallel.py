"""Order-preserving parallel map over independent work items."""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, workers=1):
    """Apply ``fn`` to every item, returning results in input order.

    Threads are used rather than processes because profiles built from
    closures are not picklable; the heavy lifting is numpy and scipy code.
    Results never depend on ``workers``.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
