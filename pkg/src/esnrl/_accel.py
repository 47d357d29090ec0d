"""Backend selection for the compiled kernels.

Kernels are written once in a numba-compatible subset of Python/numpy.
When numba is importable and ``ESNRL_NUMBA`` is not set to ``0`` the
compiled version is used; otherwise the pure numpy path runs, which is
either the same source uncompiled or a vectorised ``fallback``.
"""

from __future__ import annotations

import functools
import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    NUMBA_AVAILABLE = False

_FALSY = {"0", "false", "no", "off"}

_backend = (
    "numba"
    if NUMBA_AVAILABLE and os.environ.get("ESNRL_NUMBA", "1").strip().lower() not in _FALSY
    else "numpy"
)


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Switch backend at runtime; returns the previous one."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous


class use_backend:
    """Context manager form of :func:`set_backend`."""

    def __init__(self, name: str):
        self.name = name
        self._prev = None

    def __enter__(self):
        self._prev = set_backend(self.name)
        return self

    def __exit__(self, *exc):
        set_backend(self._prev)
        return False


def kernel(func=None, *, fallback=None):
    """Pair a kernel with a lazily compiled njit twin.

    Calls dispatch on the backend active at call time, so tests and the
    benchmark can flip between the two without re-importing. ``fallback``
    replaces ``func`` on the numpy backend when a vectorised form exists.
    """
    if func is None:
        return functools.partial(kernel, fallback=fallback)

    compiled = None
    slow = fallback if fallback is not None else func

    @functools.wraps(func)
    def dispatch(*args):
        nonlocal compiled
        if _backend == "numba":
            if compiled is None:
                compiled = numba.njit(cache=True)(func)
            return compiled(*args)
        return slow(*args)

    dispatch.py_func = func
    dispatch.fallback = slow
    return dispatch
