"""Best-effort glibc malloc tuning for array-heavy loops.

Encoder-sized temporaries (64KB-1MB) cycle fast enough that glibc's default
mmap/trim thresholds cause every allocation to fault in fresh zero pages,
which dominates runtime. Raising the thresholds keeps those buffers on the
heap and recycled. No-op on non-glibc platforms.
"""
from __future__ import annotations

import ctypes
import sys

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3

_done = False


def tune_malloc() -> bool:
    """Raise glibc's mmap/trim thresholds; idempotent, returns success."""
    global _done
    if _done:
        return True
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL("libc.so.6")
        ok = (libc.mallopt(_M_MMAP_THRESHOLD, 256 * 1024 * 1024)
              and libc.mallopt(_M_TRIM_THRESHOLD, 512 * 1024 * 1024)
              and libc.mallopt(_M_TOP_PAD, 16 * 1024 * 1024))
    except OSError:
        return False
    _done = bool(ok)
    return _done
