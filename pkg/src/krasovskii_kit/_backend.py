"""Kernel backend selection.

The compiled extension `_ckernels` (when built) provides the hot kernels;
`_pykernels` is the pure-Python fallback.  Selection happens at import and
honours KRASOVSKII_BACKEND in {auto, c, pure}.  `set_backend` re-binds the
module-level functions, so callers must access them through this module
(`_backend.jacobi_eigh(...)`) rather than importing the names directly.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_KERNEL_NAMES = ("jacobi_eigh", "hermite_eval", "sup_norm_hermite",
                 "dsq_hermite")

_active = "pure"
jacobi_eigh = _pykernels.jacobi_eigh
hermite_eval = _pykernels.hermite_eval
sup_norm_hermite = _pykernels.sup_norm_hermite
dsq_hermite = _pykernels.dsq_hermite
integrate_linear_fast = None


def available_backends():
    return ("pure", "c") if _ckernels is not None else ("pure",)


def active_backend():
    return _active


def set_backend(name):
    """Select 'c', 'pure', or 'auto' (prefer compiled when present)."""
    global _active, integrate_linear_fast
    global jacobi_eigh, hermite_eval, sup_norm_hermite, dsq_hermite
    if name == "auto":
        name = "c" if _ckernels is not None else "pure"
    if name == "c":
        if _ckernels is None:
            raise RuntimeError("compiled kernels requested but the "
                               "_ckernels extension is not built")
        src = _ckernels
        integrate_linear_fast = _ckernels.integrate_linear
    elif name == "pure":
        src = _pykernels
        integrate_linear_fast = None
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(src, fn)
    _active = name


def worker_count():
    """Worker cap for ensemble runs: KRASOVSKII_THREADS or machine parallelism."""
    cap = os.environ.get("KRASOVSKII_THREADS")
    if cap is not None:
        return max(1, int(cap))
    return os.cpu_count() or 1


set_backend(os.environ.get("KRASOVSKII_BACKEND", "auto"))
