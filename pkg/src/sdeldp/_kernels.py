"""Kernel dispatch: numba-jitted inner loops by default, pure-numpy fallback
when numba is missing or SDELDP_NO_NUMBA is set to 1/true/yes/on."""
from __future__ import annotations

import os

_flag = os.environ.get("SDELDP_NO_NUMBA", "").strip().lower()
_disabled = _flag in {"1", "true", "yes", "on"}

_impl = None
if not _disabled:
    try:
        from . import _kernels_nb as _impl
        IMPL = "numba"
    except ImportError:
        _impl = None
if _impl is None:
    from . import _kernels_np as _impl
    IMPL = "numpy"

em_terminal = _impl.em_terminal
em_paths = _impl.em_paths
patchwork_terminal = _impl.patchwork_terminal
patchwork_paths = _impl.patchwork_paths
