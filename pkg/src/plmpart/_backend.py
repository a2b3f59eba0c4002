"""Select the local polynomial kernel implementation at import time.

The compiled extension is used when it was built; setting
``PLMPART_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

python_kernel = _pykernels.locpoly

try:
    from . import _kernels

    compiled_kernel = _kernels.locpoly
except ImportError:  # extension not built
    compiled_kernel = None

if compiled_kernel is not None and not os.environ.get("PLMPART_PURE_PYTHON"):
    locpoly = compiled_kernel
    BACKEND = "compiled"
else:
    locpoly = python_kernel
    BACKEND = "python"
