"""Pick the compiled core or the pure-Python fallback at import time.

Set ``GPALIGN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from gpalign import _fallback

BACKEND = "python"
if os.environ.get("GPALIGN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from gpalign import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
else:
    _impl = _fallback

radial_terms_1d = _impl.radial_terms_1d
dtw_accumulate = _impl.dtw_accumulate
dtw_backtrack = _impl.dtw_backtrack
