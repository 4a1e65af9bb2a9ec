import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence

from tqdm import tqdm

from errors import ValidationError


def worker_count():
    """Worker pool size, capped by QIBOUND_THREADS when set."""
    default = min(8, os.cpu_count() or 1)
    raw = os.getenv('QIBOUND_THREADS')
    if not raw:
        return default
    try:
        cap = int(raw)
    except ValueError:
        raise ValidationError(f"QIBOUND_THREADS must be an integer, got {raw!r}")
    if cap < 1:
        raise ValidationError(f"QIBOUND_THREADS must be at least 1, got {cap}")
    return min(default, cap)


def ordered_map(fn: Callable, items: Sequence, progress: bool = False, desc: str = "sweep") -> List:
    """Map fn over items on a thread pool; results keep the input order."""
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=not progress))
