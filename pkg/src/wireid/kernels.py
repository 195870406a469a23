"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it
is missing or when ``WIREID_PURE_PYTHON`` is set to a non-empty value
other than ``0``.
"""
import os

from . import _pykernels

NAMES = (
    "disc_runs",
    "segment_softmax",
    "segment_softmax_backward",
    "spmm",
    "spmm_t",
    "edge_dot",
    "pair_histogram",
    "union_components",
    "batch_hard",
)


def _load_compiled():
    if os.environ.get("WIREID_PURE_PYTHON", "0") not in ("", "0"):
        return None
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pykernels

disc_runs = _impl.disc_runs
segment_softmax = _impl.segment_softmax
segment_softmax_backward = _impl.segment_softmax_backward
spmm = _impl.spmm
spmm_t = _impl.spmm_t
edge_dot = _impl.edge_dot
pair_histogram = _impl.pair_histogram
union_components = _impl.union_components
batch_hard = _impl.batch_hard


def available_backends():
    """Map backend name -> module for every backend importable right now."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
