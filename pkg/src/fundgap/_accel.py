"""Backend switch for the compiled kernels.

Set ``FUNDGAP_NUMBA=0`` to force the pure-numpy path. Numba is also skipped
when it cannot be imported.
"""

import os

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    nb = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("FUNDGAP_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    return lambda func: func


def thread_count(requested: int | None = None) -> int:
    """Worker threads for replicate loops (``FUNDGAP_THREADS``, default 1)."""
    if requested is not None:
        return max(1, int(requested))
    return max(1, int(os.environ.get("FUNDGAP_THREADS", "1") or 1))
