# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loops for kernel interpolation and Fock-space factor application."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef double complex cplx


cdef inline cplx _bary(const cplx[:, ::1] table, Py_ssize_t row, const double[::1] nodes,
                       const double[::1] bw, double s) nogil:
    cdef Py_ssize_t j, n = nodes.shape[0]
    cdef double c, den = 0.0, d
    cdef cplx num = 0.0
    if s > 1.0 + 1e-12:
        return 0.0
    if s > 1.0:
        s = 1.0
    elif s < 0.0:
        s = 0.0
    for j in range(n):
        d = s - nodes[j]
        if d == 0.0:
            return table[row, j]
        c = bw[j] / d
        den += c
        num += c * table[row, j]
    return num / den


def bary_rows(const cplx[:, ::1] table, const double[::1] nodes, const double[::1] bw,
              const long[::1] rows, const double[::1] s):
    """Evaluate row rows[i] of table at s[i]; zero above 1, clamped below 0."""
    cdef Py_ssize_t i, n = rows.shape[0]
    out = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _bary(table, rows[i], nodes, bw, s[i])
    return out


def propagate_bary(const cplx[:, ::1] vec, const long[::1] src, const long[::1] tgt,
                   const double[::1] emid, const cplx[::1] amp, const long[::1] slot,
                   const long[::1] brow, const double[::1] shift, const cplx[:, ::1] table,
                   const double[::1] nodes, const double[::1] bw, Py_ssize_t d_out):
    """out[b, tgt] += amp * table[brow[b] + slot](emid + shift[b]) * vec[b, src]."""
    cdef Py_ssize_t B = vec.shape[0], T = src.shape[0], b, t
    out = np.zeros((B, d_out), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    cdef cplx x
    with nogil:
        for b in range(B):
            for t in range(T):
                x = vec[b, src[t]]
                if x == 0.0:
                    continue
                o[b, tgt[t]] += amp[t] * _bary(table, brow[b] + slot[t], nodes, bw,
                                               emid[t] + shift[b]) * x
    return out


def propagate_lagrange(const cplx[:, ::1] vec, const long[::1] src, const long[::1] tgt,
                       const long[::1] eidx, const cplx[::1] amp, const long[::1] slot,
                       const long[::1] brow, const long[::1] sidx, const double[:, :, ::1] lw,
                       const double[:, ::1] table, Py_ssize_t d_out):
    """As propagate_bary, with interpolation weights lw[sidx, eidx, :] precomputed.

    ``table`` is the complex kernel table viewed as interleaved doubles.
    """
    cdef Py_ssize_t B = vec.shape[0], T = src.shape[0], n = lw.shape[2], b, t, j, row, e
    out = np.zeros((B, d_out), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    cdef cplx x
    cdef double re, im, wj
    cdef const double* w
    cdef const double* tb
    with nogil:
        for b in range(B):
            for t in range(T):
                x = vec[b, src[t]]
                if x == 0.0:
                    continue
                row = brow[b] + slot[t]
                w = &lw[sidx[b], eidx[t], 0]
                tb = &table[row, 0]
                re = 0.0
                im = 0.0
                for j in range(n):
                    wj = w[j]
                    re = re + wj * tb[2 * j]
                    im = im + wj * tb[2 * j + 1]
                o[b, tgt[t]] += amp[t] * (re + 1j * im) * x
    return out
