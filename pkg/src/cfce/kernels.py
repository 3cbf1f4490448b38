"""Backend selection for the inner-loop kernels.

The compiled extension is used when it imports; set ``CFCE_PURE_PYTHON=1``
to force the NumPy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CFCE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels

sq_inf_threshold = _impl.sq_inf_threshold
sq_inf_prox = _impl.sq_inf_prox
sq_inf_prox_batch = _impl.sq_inf_prox_batch
phase_index = _impl.phase_index
quantize_phase = _impl.quantize_phase
rho_sweep = _impl.rho_sweep
rho_sweep_batch = _impl.rho_sweep_batch
drs_time_step = _impl.drs_time_step


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
