"""Select the compiled kernels when available, the numpy twins otherwise.

Set ``KBRESIZE_BACKEND=python`` to force the fallback (used by the
benchmark and by the cross-backend tests).
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("KBRESIZE_BACKEND", "").lower() != "python":
    kernels = _compiled
    BACKEND = "compiled"
else:
    kernels = _fallback
    BACKEND = "python"

compiled = _compiled
fallback = _fallback
