"""Kernel backend selection: compiled extension when available, numpy otherwise.

Set ``MINMOD_BACKEND=python`` or ``MINMOD_BACKEND=compiled`` to force one
(the latter raises if the extension did not build).  Both backends run the
same instruction tapes; results agree to rounding, and all tolerances in
this package absorb that difference.
"""

from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("MINMOD_BACKEND", "auto")

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "MINMOD_BACKEND=compiled but the minmod._ckernels extension "
                "is not built; reinstall with Cython and a C compiler"
            )
        _impl = None
if _impl is None:
    _impl = _pykernels

BACKEND_NAME = _impl.BACKEND_NAME
eval_batch = _impl.eval_batch
escape_scan = _impl.escape_scan


def available_backends():
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the kernel module for ``name`` ('python' or 'compiled')."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
