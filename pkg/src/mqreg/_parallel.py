import os
from concurrent.futures import ThreadPoolExecutor


def max_workers():
    """Worker cap from ``MQREG_THREADS`` (default 1, i.e. serial)."""
    raw = os.environ.get("MQREG_THREADS", "").strip()
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def pmap(fn, items, workers=None):
    """Order-preserving map; threads are used when more than one worker is allowed.

    The numba kernels release the GIL, so threads give real parallelism for
    the fitting loops without pickling datasets.
    """
    items = list(items)
    workers = max_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))
