# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled gather/scatter loops for spin-string excitation operators.

Complex arrays are handled through their float64 views (real and imaginary
parts interleaved), so every update is a real multiply-add with the +-1 sign.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _rows(double[:, ::1] out, double[:, ::1] inp, long[::1] src, long[::1] dst,
                       signed char[::1] sgn, Py_ssize_t e0, Py_ssize_t e1) noexcept nogil:
    """out[dst] += sgn * inp[src] for whole rows (alpha strings)."""
    cdef Py_ssize_t e, k, s, d, n = inp.shape[1]
    cdef double g
    for e in range(e0, e1):
        s = src[e]
        d = dst[e]
        g = sgn[e]
        for k in range(n):
            out[d, k] += g * inp[s, k]


cdef inline void _cols(double[:, ::1] out, double[:, ::1] inp, long[::1] src, long[::1] dst,
                       signed char[::1] sgn, Py_ssize_t e0, Py_ssize_t e1) noexcept nogil:
    """out[:, dst] += sgn * inp[:, src] for complex columns (beta strings)."""
    cdef Py_ssize_t e, a, s, d, na = inp.shape[0]
    cdef double g
    for a in range(na):
        for e in range(e0, e1):
            s = 2 * src[e]
            d = 2 * dst[e]
            g = sgn[e]
            out[a, d] += g * inp[a, s]
            out[a, d + 1] += g * inp[a, s + 1]


def excite_all(double complex[:, ::1] c, long[::1] ptr, long[::1] src,
               long[::1] dst, signed char[::1] sgn, Py_ssize_t n_pairs):
    """out[pq] = E_pq c acting on both spin strings."""
    cdef Py_ssize_t na = c.shape[0], nb = c.shape[1], pq
    out_arr = np.zeros((n_pairs, na, nb), dtype=np.complex128)
    cdef double[:, :, ::1] out = out_arr.view(np.float64)
    cdef double[:, ::1] cr = np.asarray(c).view(np.float64)
    with nogil:
        for pq in range(n_pairs):
            _rows(out[pq], cr, src, dst, sgn, ptr[pq], ptr[pq + 1])
            _cols(out[pq], cr, src, dst, sgn, ptr[pq], ptr[pq + 1])
    return out_arr


def deexcite_sum(double complex[:, :, ::1] g_in, long[::1] ptr, long[::1] src,
                 long[::1] dst, signed char[::1] sgn):
    """sum_pq E_pq g_in[pq] acting on both spin strings."""
    cdef Py_ssize_t n_pairs = g_in.shape[0], na = g_in.shape[1], nb = g_in.shape[2], pq
    out_arr = np.zeros((na, nb), dtype=np.complex128)
    cdef double[:, ::1] out = out_arr.view(np.float64)
    cdef double[:, :, ::1] gr = np.asarray(g_in).view(np.float64)
    with nogil:
        for pq in range(n_pairs):
            _rows(out, gr[pq], src, dst, sgn, ptr[pq], ptr[pq + 1])
            _cols(out, gr[pq], src, dst, sgn, ptr[pq], ptr[pq + 1])
    return out_arr
