"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``NUCBEND_PURE_PYTHON=1``
to force the pure-Python fallback.  ``BACKEND`` names the active one.
"""

import os

from . import _pykernels

if os.environ.get("NUCBEND_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

trace_boundary = _impl.trace_boundary
contour_energies = _impl.contour_energies
flood = _impl.flood


def available_backends():
    """Name -> kernel module for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
