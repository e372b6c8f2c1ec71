"""Hot-kernel backend selection.

Prefers the compiled Cython module; falls back to the pure-numpy
implementation when the extension is unavailable. Set the environment
variable ``ROLEENGINE_PURE_KERNELS=1`` to force the fallback (used by the
backend-equivalence tests and the kernel benchmark).
"""

import os

if os.environ.get("ROLEENGINE_PURE_KERNELS"):
    from . import pure as _backend
else:
    try:
        from . import _native as _backend  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _backend

BACKEND_NAME = _backend.BACKEND_NAME
thin_pass = _backend.thin_pass
sample_bilinear = _backend.sample_bilinear
stamp_disc = _backend.stamp_disc
