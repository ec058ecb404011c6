"""Hot-loop kernels: compiled extension when available, numpy otherwise.

Set ``PHONOBEAM_KERNELS=numpy`` or ``=compiled`` to force a backend (the
latter raises if the extension was not built).
"""

import os
import warnings

from . import reference
from .reference import GevdError

_requested = os.environ.get("PHONOBEAM_KERNELS", "").strip().lower()

if _requested == "numpy":
    _impl = reference
else:
    try:
        from . import _compiled as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        warnings.warn(
            "phonobeam compiled kernels unavailable; falling back to the "
            "slower numpy implementation (rebuild/reinstall to compile them)",
            RuntimeWarning,
        )
        _impl = reference

BACKEND = "numpy" if _impl is reference else "compiled"

weighted_covariance = _impl.weighted_covariance
gevd = _impl.gevd

__all__ = ["BACKEND", "GevdError", "gevd", "reference", "weighted_covariance"]
