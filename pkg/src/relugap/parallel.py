"""Order-preserving process-pool map with single-threaded BLAS in workers."""
from concurrent.futures import ProcessPoolExecutor

from threadpoolctl import threadpool_limits


def _init_worker():
    threadpool_limits(1)


def pmap(fn, items, workers=1):
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
        return list(pool.map(fn, items))
