"""Numba acceleration shim.

Hot kernels are compiled with numba's ``@njit`` by default.  Setting the
environment variable ``STDSIM_NUMBA=0`` (or numba being unavailable) selects
the pure-Python/NumPy path: the same functions run uncompiled.  Kernels draw
no randomness themselves (they consume pre-drawn uniforms) and use only IEEE
scalar arithmetic, so the two backends produce bit-identical results.
"""

import os


def _env_enabled() -> bool:
    return os.environ.get("STDSIM_NUMBA", "1").strip().lower() not in (
        "0", "false", "no", "off",
    )


NUMBA_ENABLED = False
if _env_enabled():
    try:
        from numba import njit as _numba_njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _numba_njit = None


def njit(*args, **kwargs):
    """``numba.njit`` when the compiled backend is active, identity otherwise.

    The pure-Python fallback attaches a ``py_func`` attribute mirroring
    numba's, so callers can always reach the uncompiled implementation.
    """
    if NUMBA_ENABLED:
        return _numba_njit(*args, **kwargs)
    if args and callable(args[0]) and not kwargs:
        fn = args[0]
        fn.py_func = fn
        return fn

    def wrap(fn):
        fn.py_func = fn
        return fn

    return wrap


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
