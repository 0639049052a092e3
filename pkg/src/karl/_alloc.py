"""Allocator tuning for the training loops.

Network activations are a few hundred kB each; with glibc's default
thresholds every such temporary is a fresh mmap and page-faults on first
touch. Raising the thresholds keeps them on the heap (~40% faster
gradient steps). A no-op on other C libraries.
"""
import ctypes
import ctypes.util

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3
_done = False


def tune_allocator() -> bool:
    global _done
    if _done:
        return True
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    ok = (mallopt(_M_MMAP_THRESHOLD, 16 << 20) == 1
          and mallopt(_M_TRIM_THRESHOLD, 128 << 20) == 1
          and mallopt(_M_TOP_PAD, 64 << 20) == 1)
    _done = ok
    return ok
