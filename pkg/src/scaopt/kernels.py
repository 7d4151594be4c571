"""
Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``SCAOPT_KERNELS`` is set to ``python``, the pure
Python reference module is used. Both expose the same functions.
"""

import os

from . import _kernels_py


def _load():
    if os.environ.get("SCAOPT_KERNELS", "").lower() == "python":
        return _kernels_py
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py
    return _kernels


backend = _load()
BACKEND = backend.BACKEND

soft_threshold_vec = backend.soft_threshold_vec
lasso_cyclic_sweep = backend.lasso_cyclic_sweep
logreg_cyclic_sweep = backend.logreg_cyclic_sweep


def available_backends():
    """Mapping of backend name to module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
