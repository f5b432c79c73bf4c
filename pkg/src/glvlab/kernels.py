"""Backend selection for the hot assembly kernels.

The compiled extension is used when it imported cleanly; setting the
environment variable GLV_PURE_PYTHON=1 forces the numpy fallback. Both
backends implement identical contracts (see glvlab._kernels_py) and agree
to roundoff; within one backend results are bitwise reproducible.
"""

import os

from . import _kernels_py

triangle_energies = _kernels_py.triangle_energies

if os.environ.get("GLV_PURE_PYTHON", "0") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

interior_energy = _impl.interior_energy
interior_gradient = _impl.interior_gradient


def backend_name():
    return BACKEND
