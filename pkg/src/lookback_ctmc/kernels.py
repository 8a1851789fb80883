"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise (or when the
environment variable ``LOOKBACK_CTMC_PURE_PYTHON`` is set to a non-empty
value other than ``0``) the NumPy fallback is used.
"""
from __future__ import annotations

import os

from . import _kernels_py

_force_py = os.environ.get("LOOKBACK_CTMC_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    from ._kernels_py import fd_floating_put_sweep, poisson_series_banded

    BACKEND = "python"
else:
    try:
        from ._kernels import fd_floating_put_sweep, poisson_series_banded

        BACKEND = "compiled"
    except ImportError:
        from ._kernels_py import fd_floating_put_sweep, poisson_series_banded

        BACKEND = "python"

python_kernels = _kernels_py

__all__ = ["BACKEND", "fd_floating_put_sweep", "poisson_series_banded", "python_kernels"]
