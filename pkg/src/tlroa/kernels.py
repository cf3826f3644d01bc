"""Backend selection for the integration kernels.

The compiled extension is used when it imports; otherwise the pure-Python
reference takes over. ``TLROA_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

if os.environ.get("TLROA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
OK, STEP_FAILURE, NON_FINITE, ESCAPED = (
    _pykernels.OK, _pykernels.STEP_FAILURE, _pykernels.NON_FINITE, _pykernels.ESCAPED)

rhs = _impl.rhs
rkf45 = _impl.rkf45
rk4 = _impl.rk4
endpoints = _impl.endpoints
settle = _impl.settle
settle_many = _impl.settle_many


def backends():
    """Available backend modules keyed by name (used by parity tests and the benchmark)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
