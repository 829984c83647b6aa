"""Kernel backend selection.

The compiled extension is used when it was built and ``RADWAVE_PURE_PYTHON``
is unset; otherwise the NumPy implementation is used.  Both produce the same
results to round-off.
"""

import os

from . import _kernels_py

BACKEND = "python"
leapfrog = _kernels_py.leapfrog

if not os.environ.get("RADWAVE_PURE_PYTHON"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        leapfrog = _kernels.leapfrog


def get_leapfrog(backend=None):
    """Return the leapfrog kernel for ``backend`` ("cython", "python" or None)."""
    if backend is None:
        return leapfrog
    if backend == "python":
        return _kernels_py.leapfrog
    if backend == "cython":
        from . import _kernels

        return _kernels.leapfrog
    raise ValueError(f"unknown backend {backend!r}")
