"""Backend selection for the numerical hot loops.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is loaded. Set ``REBENCH_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("REBENCH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

STATUS_NOT_CONVERGED = -1
STATUS_ZERO_VARIANCE = -2

lasso_cd_gram = _impl.lasso_cd_gram
lasso_path_gram = _impl.lasso_path_gram
lasso_holdout_sweep = _impl.lasso_holdout_sweep
ar1_filter = _impl.ar1_filter
standardize_rows = _impl.standardize_rows


def _philox_fill_agrees(fill) -> bool:
    # the compiled fill writes numpy's Philox state struct directly; only
    # trust it if it reproduces Generator draws on this numpy build
    key = np.array([12345, 678], dtype=np.uint64)
    a = np.empty((3, 17))
    b = np.empty((3, 17))
    try:
        fill(np.random.Philox(key=key), 5, a)
    except Exception:  # noqa: BLE001
        return False
    _pykernels.philox_normals(np.random.Philox(key=key), 5, b)
    return np.array_equal(a, b)


philox_normals = _impl.philox_normals
if _impl is not _pykernels and not _philox_fill_agrees(philox_normals):
    philox_normals = _pykernels.philox_normals


def available_backends():
    """Map of backend name to module, for tests and benchmarks."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends
