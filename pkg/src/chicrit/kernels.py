"""Backend selection for the hot kernels.

The compiled Cython extension is used when it imports; otherwise the numpy
implementation. Set ``CHICRIT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("CHICRIT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
sh_derivs = _impl.sh_derivs
tilde3_det_pd = _impl.tilde3_det_pd
ek_det2 = _impl.ek_det2
