"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
backend is the fallback and the reference implementation. Set
MAPPRIOR_KERNELS=numpy (or =cython) to force a backend.
"""
from __future__ import annotations

import os

from . import numpy_backend

_requested = os.environ.get("MAPPRIOR_KERNELS", "").strip().lower()

impl = None
if _requested in ("", "cython", "c"):
    try:
        from . import _ckern as impl  # type: ignore[no-redef]
    except ImportError:
        impl = None
        if _requested:
            raise ImportError(
                "MAPPRIOR_KERNELS requested the compiled backend but "
                "mapprior.kernels._ckern is not built")
if impl is None:
    impl = numpy_backend

BACKEND = impl.NAME

softmax_forward = impl.softmax_forward
softmax_backward = impl.softmax_backward
layer_norm_forward = impl.layer_norm_forward
layer_norm_backward = impl.layer_norm_backward
gelu_forward = impl.gelu_forward
gelu_backward = impl.gelu_backward
chamfer_directed = impl.chamfer_directed
