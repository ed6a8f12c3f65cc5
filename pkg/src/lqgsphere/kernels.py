"""Hot-loop kernels, compiled when the extension is built.

``BACKEND`` is ``"cython"`` when ``_ckernels`` imports, ``"python"``
otherwise. Setting ``LQGSPHERE_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("LQGSPHERE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

ar1_filter = _impl.ar1_filter
first_passage = _impl.first_passage
bilinear = _impl.bilinear

__all__ = ["BACKEND", "ar1_filter", "first_passage", "bilinear"]
