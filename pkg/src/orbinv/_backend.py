"""Kernel backend selection.

The compiled extension is used when it imports; set ``ORBINV_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if not os.environ.get("ORBINV_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"
