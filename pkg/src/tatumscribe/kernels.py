"""Kernel backend selection.

The compiled extension is preferred; set ``TATUMSCRIBE_PURE_PYTHON=1`` to
force the NumPy fallback.  ``BACKEND`` names the active implementation.
"""
import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)


def _load_compiled():
    if os.environ.get("TATUMSCRIBE_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _kernels
    except ImportError as exc:
        logger.debug("compiled kernels unavailable (%s); using NumPy fallback", exc)
        return None
    return _kernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _fallback

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward
tatum_pool_forward = _impl.tatum_pool_forward
tatum_pool_backward = _impl.tatum_pool_backward
peak_pick = _impl.peak_pick


def backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _fallback}
    if _compiled is not None:
        found["cython"] = _compiled
    else:
        try:
            from . import _kernels
            found["cython"] = _kernels
        except ImportError:
            pass
    return found
