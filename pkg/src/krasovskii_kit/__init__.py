"""krasovskii-kit: stability certification and simulation for retarded
differential equations with time-varying and distributed delays.

Hot kernels run on a compiled extension when available, with a pure-Python
fallback selected at import (see `_backend`, env var KRASOVSKII_BACKEND).
"""
from ._backend import active_backend, available_backends, set_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "available_backends", "set_backend",
           "__version__"]
