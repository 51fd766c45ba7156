"""Optional numba acceleration.

Hot kernels are decorated with :func:`kernel`. When numba is importable and
``PLANTGROWTH_DISABLE_NUMBA`` is unset (or ``0``), they are compiled with
``numba.njit``; otherwise the plain numpy/Python function is used unchanged.
The flag is read once, at import time.
"""
from __future__ import annotations

import os

_FLAG = "PLANTGROWTH_DISABLE_NUMBA"

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")


def kernel(func):
    """Compile ``func`` with ``numba.njit(cache=True)`` if acceleration is on."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def python_impl(func):
    """Return the undecorated Python function behind a kernel."""
    return getattr(func, "py_func", func)
