"""Order-preserving parallel map; results never depend on the thread count."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def make_map_fn(threads: int):
    def map_fn(fn, items):
        return parallel_map(fn, items, threads)
    return map_fn
