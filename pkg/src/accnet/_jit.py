"""Numba on/off switch.

Hot kernels in :mod:`accnet.kernels` are compiled with numba when available.
Set the environment variable ``ACCNET_NO_NUMBA=1`` before import to force the
pure-numpy fallbacks (useful for debugging and for the kernel benchmark).
"""

import os

NUMBA_ENABLED = os.environ.get("ACCNET_NO_NUMBA", "").lower() not in ("1", "true", "yes")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrap(f):
            return f

        return wrap
