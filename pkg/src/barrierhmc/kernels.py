"""Kernel backend selection: compiled extension if available, numpy fallback.

Set RHMC_PURE_PYTHON=1 to force the fallback (used by the benchmark and for
debugging). The two backends implement identical call signatures and status
codes; outputs agree to floating-point roundoff but are not bit-identical,
so the determinism contract holds per backend.
"""

from __future__ import annotations

import os

if os.environ.get("RHMC_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND: str = _impl.BACKEND

OK = _impl.OK
BOUNDARY = _impl.BOUNDARY
CHOL_FAIL = _impl.CHOL_FAIL
FP_FAIL = _impl.FP_FAIL
DIVERGED = _impl.DIVERGED

point_core = _impl.point_core
integrate = _impl.integrate
step_from_z = _impl.step_from_z
Stepper = _impl.Stepper
