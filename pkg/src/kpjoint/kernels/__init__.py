"""Kernel backend selection.

The compiled extension is preferred when present; set ``KPJOINT_KERNELS`` to
``python`` or ``compiled`` to force a backend (``compiled`` raises if the
extension was not built). Selection happens once, at import time.
"""

import os

from . import numpy_backend

_choice = os.environ.get("KPJOINT_KERNELS", "auto").lower()

if _choice == "python":
    _impl = numpy_backend
elif _choice == "compiled":
    from . import _fastcore as _impl
elif _choice == "auto":
    try:
        from . import _fastcore as _impl
    except ImportError:
        _impl = numpy_backend
else:
    raise ValueError(f"KPJOINT_KERNELS must be auto, python or compiled, got {_choice!r}")

gather_windows = _impl.gather_windows
scatter_windows = _impl.scatter_windows
segment_max = _impl.segment_max
hinge_terms = _impl.hinge_terms
embedding_scatter_add = _impl.embedding_scatter_add


def backend_name():
    """Name of the active kernel backend ('python' or 'compiled')."""
    return _impl.NAME
