"""Kernel backend selection.

The compiled extension is preferred when importable; set
MVENHANCE_BACKEND=fallback (or =compiled) to force a choice. The selected
module exposes: conv2d_forward, conv2d_backward, window_scores.
"""

import os

from . import fallback

_forced = os.environ.get("MVENHANCE_BACKEND", "").strip().lower()

if _forced == "fallback":
    _impl = fallback
elif _forced == "compiled":
    from . import _kernels as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = fallback

ACTIVE_BACKEND = _impl.NAME

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
window_scores = _impl.window_scores
