"""Backend switch for the numeric kernels.

Set ``SOFTENTROPY_NO_NUMBA=1`` to force the pure-numpy code paths even when
numba is installed.
"""

from __future__ import annotations

import os

ENV_FLAG = "SOFTENTROPY_NO_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by " + ENV_FLAG)
    import numba as _numba
except ImportError:
    _numba = None

HAVE_NUMBA = _numba is not None
BACKEND = "numba" if HAVE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when enabled, else return ``None``.

    Callers keep their numpy fallback and pick between the two.
    """
    if _numba is None:
        return None
    return _numba.njit(cache=True, nogil=True)(func)
