"""Kernel backend selection.

The compiled extension is preferred when importable; the pure NumPy fallback
is used otherwise. Override with SPECTRALSCAN_BACKEND={auto,compiled,pure}.
"""

from __future__ import annotations

import os

_requested = os.environ.get("SPECTRALSCAN_BACKEND", "auto").lower()

if _requested not in ("auto", "compiled", "pure"):
    raise ImportError(
        f"SPECTRALSCAN_BACKEND must be auto, compiled or pure, got {_requested!r}"
    )

if _requested == "pure":
    from . import pure as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise
        from . import pure as _impl

BACKEND: str = _impl.NAME

xorshift_fill = _impl.xorshift_fill
csr_matvec = _impl.csr_matvec
jacobi_eigh = _impl.jacobi_eigh
sturm_count = _impl.sturm_count
recurrent_scan_diag = _impl.recurrent_scan_diag
selective_scan_core = _impl.selective_scan_core
