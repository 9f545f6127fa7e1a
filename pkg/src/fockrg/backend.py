"""Selects the compiled kernels when available, the numpy fallback otherwise.

Set ``FOCKRG_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("FOCKRG_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _core
except ImportError:
    _core = None

NAME = "compiled" if _core is not None else "numpy"


def _c(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


def bary_rows(table, nodes, bw, rows, s, impl=None):
    impl = impl or NAME
    if impl == "compiled" and _core is not None:
        return _core.bary_rows(_c(table, complex), _c(nodes, float), _c(bw, float),
                               _c(rows, np.int64), _c(s, float))
    return _fallback.bary_rows(np.asarray(table, complex), nodes, bw, np.asarray(rows),
                               np.asarray(s, float))


def propagate_bary(vec, src, tgt, emid, amp, slot, brow, shift, table, nodes, bw, d_out,
                   impl=None):
    impl = impl or NAME
    if impl == "compiled" and _core is not None:
        return _core.propagate_bary(_c(vec, complex), _c(src, np.int64), _c(tgt, np.int64),
                                    _c(emid, float), _c(amp, complex), _c(slot, np.int64),
                                    _c(brow, np.int64), _c(shift, float), _c(table, complex),
                                    _c(nodes, float), _c(bw, float), int(d_out))
    return _fallback.propagate_bary(np.asarray(vec, complex), src, tgt, emid,
                                    np.asarray(amp, complex), slot, brow, shift,
                                    np.asarray(table, complex), nodes, bw, d_out)


def propagate_lagrange(vec, src, tgt, eidx, amp, slot, brow, sidx, lw, table, d_out, impl=None):
    """Weights are laid out as lw[shift index, energy index, node]."""
    impl = impl or NAME
    if impl == "compiled" and _core is not None:
        return _core.propagate_lagrange(_c(vec, complex), _c(src, np.int64), _c(tgt, np.int64),
                                        _c(eidx, np.int64), _c(amp, complex), _c(slot, np.int64),
                                        _c(brow, np.int64), _c(sidx, np.int64), _c(lw, float),
                                        _c(table, complex).view(np.float64), int(d_out))
    return _fallback.propagate_lagrange(np.asarray(vec, complex), src, tgt, eidx,
                                        np.asarray(amp, complex), slot, brow, sidx, lw,
                                        np.asarray(table, complex), d_out)
