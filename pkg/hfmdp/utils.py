import math
import os
import time
import logging
from typing import Dict, Optional, Sequence

import numpy as np
import psutil

TRACE_LOGGER = "hfmdp.trace"

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "trace": logging.DEBUG,
}


def configure_logging(level: Optional[str] = None) -> None:
    """
    Set up the root hfmdp logger.

    The level comes from the argument or the HFMDP_LOG environment
    variable (debug, info, warning, error or trace). Only `trace` lets the
    coordinator's per-event records through on the hfmdp.trace logger.
    """
    name = (level or os.environ.get("HFMDP_LOG", "warning")).strip().lower()
    logger = logging.getLogger("hfmdp")
    logger.setLevel(_LEVELS.get(name, logging.WARNING))
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        logger.addHandler(handler)
    trace = logging.getLogger(TRACE_LOGGER)
    trace.setLevel(logging.DEBUG if name == "trace" else logging.WARNING)


def projection_index(sizes: Sequence[int], positions: Sequence[int]) -> np.ndarray:
    """
    For every assignment of a row-major table with axis `sizes`, the index
    of its restriction to the axes `positions` (kept in the given order).
    """
    sizes = tuple(int(s) for s in sizes)
    total = math.prod(sizes)
    if not positions:
        return np.zeros(total, dtype=np.int64)
    digits = np.unravel_index(np.arange(total, dtype=np.int64), sizes)
    return restrict_digits(digits, sizes, positions)


def restrict_digits(digits: Sequence[np.ndarray], sizes: Sequence[int], positions: Sequence[int]) -> np.ndarray:
    """
    Row-major index over the axes `positions` of assignments given as one
    coordinate array per axis (as np.unravel_index returns them).
    """
    n = len(digits[0]) if len(digits) else 1
    if not positions:
        return np.zeros(n, dtype=np.int64)
    sub_sizes = tuple(int(sizes[p]) for p in positions)
    return np.ravel_multi_index(tuple(digits[p] for p in positions), sub_sizes).astype(np.int64)


def marginalize(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """Sum `values` (first axis) into `size` buckets given a projection index."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=size)
    out = np.zeros((size,) + values.shape[1:])
    np.add.at(out, index, values)
    return out


def max_abs_diff(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 and b.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def resource_snapshot() -> Dict[str, float]:
    """CPU seconds and resident memory of this process."""
    proc = psutil.Process(os.getpid())
    cpu = proc.cpu_times()
    return {
        "wall": time.perf_counter(),
        "cpu": float(cpu.user + cpu.system),
        "rss_mb": round(proc.memory_info().rss / 1024 / 1024, 1),
    }


def resource_delta(start: Dict[str, float]) -> Dict[str, float]:
    end = resource_snapshot()
    return {
        "wall_seconds": round(end["wall"] - start["wall"], 6),
        "cpu_seconds": round(end["cpu"] - start["cpu"], 6),
        "peak_rss_mb": max(end["rss_mb"], start["rss_mb"]),
    }


def clear_console() -> None:
    # \033[2J clears the screen, \033[H moves the cursor to the top left
    print("\033[2J\033[H", end="", flush=True)
