"""Pure-numpy versions of the compiled loops in ``_core``."""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 20


def bary_weights(nodes: np.ndarray, bw: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Barycentric weight rows for arguments s, with support clipping at 1."""
    s = np.asarray(s, dtype=float)
    zero = s > 1.0 + 1e-12
    x = np.clip(s, 0.0, 1.0)
    d = x[:, None] - nodes[None, :]
    hit = d == 0.0
    d[hit] = 1.0
    c = bw[None, :] / d
    W = c / c.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    W[rows] = hit[rows].astype(float)
    W[zero] = 0.0
    return W


def bary_rows(table, nodes, bw, rows, s):
    table = np.asarray(table)
    rows = np.asarray(rows)
    s = np.asarray(s, dtype=float)
    out = np.empty(rows.size, dtype=complex)
    for lo in range(0, rows.size, _CHUNK // max(1, nodes.size)):
        hi = min(rows.size, lo + _CHUNK // max(1, nodes.size))
        W = bary_weights(nodes, bw, s[lo:hi])
        out[lo:hi] = np.einsum("ij,ij->i", W, table[rows[lo:hi]])
    return out


def propagate_bary(vec, src, tgt, emid, amp, slot, brow, shift, table, nodes, bw, d_out):
    B = vec.shape[0]
    out = np.zeros((B, d_out), dtype=complex)
    if src.size == 0:
        return out
    step = max(1, _CHUNK // max(1, src.size))
    for lo in range(0, B, step):
        hi = min(B, lo + step)
        x = vec[lo:hi][:, src]
        rows = (brow[lo:hi, None] + slot[None, :]).ravel()
        s = (emid[None, :] + shift[lo:hi, None]).ravel()
        vals = bary_rows(table, nodes, bw, rows, s).reshape(hi - lo, src.size)
        contrib = amp[None, :] * vals * x
        for i in range(hi - lo):
            out[lo + i] += np.bincount(tgt, weights=contrib[i].real, minlength=d_out)
            out[lo + i] += 1j * np.bincount(tgt, weights=contrib[i].imag, minlength=d_out)
    return out


def propagate_lagrange(vec, src, tgt, eidx, amp, slot, brow, sidx, lw, table, d_out):
    B = vec.shape[0]
    out = np.zeros((B, d_out), dtype=complex)
    if src.size == 0:
        return out
    step = max(1, _CHUNK // max(1, src.size * table.shape[1]))
    for lo in range(0, B, step):
        hi = min(B, lo + step)
        x = vec[lo:hi][:, src]
        rows = brow[lo:hi, None] + slot[None, :]
        weights = lw[sidx[lo:hi, None], eidx[None, :], :]
        vals = np.einsum("btj,btj->bt", weights, table[rows])
        contrib = amp[None, :] * vals * x
        for i in range(hi - lo):
            out[lo + i] += np.bincount(tgt, weights=contrib[i].real, minlength=d_out)
            out[lo + i] += 1j * np.bincount(tgt, weights=contrib[i].imag, minlength=d_out)
    return out
