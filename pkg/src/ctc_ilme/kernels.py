"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``CTC_ILME_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CTC_ILME_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend(name=None):
    """Return the kernel module for ``name`` ("python", "cython") or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


log_add = _impl.log_add
max_abs_diff_rows = _impl.max_abs_diff_rows
ctc_forward = _impl.ctc_forward
prefix_beam_search = _impl.prefix_beam_search
edit_counts = _impl.edit_counts
