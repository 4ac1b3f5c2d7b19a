"""Kernel backend selection.

Hot inner loops (operator stencil application, gauge segment integrals) have
two implementations: numba-jitted loops and pure-numpy vectorized fallbacks.
The numba path is the default when numba imports; setting the environment
variable ``MSLAB_DISABLE_NUMBA=1`` forces the numpy path. Each backend is
internally deterministic (fixed reduction order); across backends results
agree to floating-point reassociation noise only.
"""

import os

_flag = os.environ.get("MSLAB_DISABLE_NUMBA", "").strip()
NUMBA_DISABLED = _flag not in ("", "0")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled by MSLAB_DISABLE_NUMBA")
    from numba import njit as _njit  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def active_backend() -> str:
    """Name of the backend the hot kernels will dispatch to."""
    return "numba" if HAVE_NUMBA else "numpy"
