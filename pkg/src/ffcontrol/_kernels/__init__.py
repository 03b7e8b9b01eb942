"""Kernel backend selection.

The compiled Cython module is preferred when present; the numpy fallback is
used otherwise. Override with the environment variable FFCONTROL_KERNELS:
"py"/"python" forces the fallback, "c"/"compiled" requires the extension
(ImportError if it was not built).
"""

import os

_choice = os.environ.get("FFCONTROL_KERNELS", "").lower()

if _choice in ("py", "python"):
    from . import _pyops as _impl
elif _choice in ("c", "compiled"):
    from . import _core as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        from . import _pyops as _impl

apply_local = _impl.apply_local
apply_local_norm2 = _impl.apply_local_norm2
expect_local = _impl.expect_local
BACKEND = _impl.BACKEND

__all__ = ["apply_local", "apply_local_norm2", "expect_local", "BACKEND"]
