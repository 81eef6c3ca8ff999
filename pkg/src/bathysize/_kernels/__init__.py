"""Kernel backend selection.

The compiled Cython speedups are preferred when the extension was built;
otherwise (or when BATHYSIZE_FORCE_NUMPY is set) the pure NumPy fallback is
used. Both expose the same functions with identical semantics.
"""

import os

from . import pure as _pure

if os.environ.get("BATHYSIZE_FORCE_NUMPY"):
    _impl = _pure
    BACKEND = "numpy"
else:
    try:
        from . import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "numpy"

assemble_p1_triplets = _impl.assemble_p1_triplets
cg_jacobi = _impl.cg_jacobi


def backend_name():
    """Active kernel backend: 'compiled' or 'numpy'."""
    return BACKEND
