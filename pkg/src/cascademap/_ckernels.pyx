# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; same signatures and results."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t, uint32_t

cnp.import_array()


cdef inline int32_t _wrap32(int64_t v) nogil:
    return <int32_t>(<uint32_t>v)


def blocked_matmul(const int8_t[:, ::1] lhs, const int8_t[:, ::1] rhs, acc_in,
                   int bm, int bk, int bn):
    cdef Py_ssize_t h = lhs.shape[0], w1 = lhs.shape[1], w2 = rhs.shape[1]
    if h % bm or w1 % bk or w2 % bn or rhs.shape[0] != w1:
        raise ValueError(f"tile {h}x{w1}x{w2} is not a multiple of block {bm}x{bk}x{bn}")
    # accumulate modulo 2**32; the final cast gives the wrapped INT32 result
    if acc_in is None:
        out = np.zeros((h, w2), dtype=np.uint32)
    else:
        out = np.ascontiguousarray(acc_in, dtype=np.int32).view(np.uint32).copy()
    cdef uint32_t[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef int32_t s
    cdef const int8_t* rrow
    cdef uint32_t* orow
    # block shapes are validated above; addition modulo 2**32 is associative,
    # so a row-major sweep gives the same result as block-by-block VMACs
    with nogil:
        for i in range(h):
            orow = &o[i, 0]
            for k in range(w1):
                s = lhs[i, k]
                if s == 0:
                    continue
                rrow = &rhs[k, 0]
                for j in range(w2):
                    orow[j] += <uint32_t>(s * <int32_t>rrow[j])
    return out.view(np.int32)


def requantize(const int32_t[:, ::1] acc, bias, int shift, bint relu):
    cdef Py_ssize_t h = acc.shape[0], w = acc.shape[1], i, j
    res = np.empty((h, w), dtype=np.int8)
    cdef int8_t[:, ::1] r = res
    cdef const int32_t[::1] b
    cdef bint has_bias = bias is not None
    if has_bias:
        b = np.ascontiguousarray(bias, dtype=np.int32)
    cdef int64_t v, mag, half = (<int64_t>1 << (shift - 1)) if shift > 0 else 0
    for i in range(h):
        for j in range(w):
            v = acc[i, j]
            if has_bias:
                v = _wrap32(v + b[j])
            if relu and v < 0:
                v = 0
            if shift > 0:
                if v < 0:
                    mag = (-v + half) >> shift
                    v = -mag
                else:
                    v = (v + half) >> shift
            if v > 127:
                v = 127
            elif v < -128:
                v = -128
            r[i, j] = <int8_t>v
    return res


def find_bottom_left(const uint8_t[:, ::1] occ, int h, int w):
    cdef Py_ssize_t rows = occ.shape[0], cols = occ.shape[1], r, c, i, j
    cdef bint ok
    if h > rows or w > cols:
        return (-1, -1)
    for r in range(rows - h + 1):
        for c in range(cols - w + 1):
            ok = True
            for i in range(r, r + h):
                for j in range(c, c + w):
                    if occ[i, j]:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                return (r, c)
    return (-1, -1)
