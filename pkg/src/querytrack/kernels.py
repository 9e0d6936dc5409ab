"""Kernel dispatch: compiled extension when available, pure numpy otherwise.

The compiled module ``querytrack._ckernels`` is built from Cython and covers
the per-frame hot loops (pairwise IoU/GIoU, min-cost assignment, NMS). Both
backends implement identical algorithms and return bit-identical results.
Set ``QUERYTRACK_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

try:  # pragma: no cover - exercised indirectly via backend tests
    from . import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

_backend = _pykernels
if _ckernels is not None and os.environ.get("QUERYTRACK_PURE_PYTHON", "") != "1":
    _backend = _ckernels


def backend_name() -> str:
    """Name of the active backend: 'compiled' or 'pure'."""
    return _backend.BACKEND


def set_backend(name: str) -> None:
    """Select 'compiled' or 'pure' explicitly (mainly for tests/benchmarks)."""
    global _backend
    if name == "pure":
        _backend = _pykernels
    elif name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available")
        _backend = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def pairwise_iou(a, b):
    return _backend.pairwise_iou(a, b)


def pairwise_giou(a, b):
    return _backend.pairwise_giou(a, b)


def lap_solve(cost):
    return _backend.lap_solve(cost)


def nms_keep(boxes, scores, iou_thresh):
    return _backend.nms_keep(boxes, scores, iou_thresh)
