# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the surrogate forward pass.

Same four operations as ops_py, written as typed loops over float32
memoryviews.  The inner loops run over the contiguous spatial axis so
the compiler can vectorize them; accumulation order is fixed, making
each call bit-reproducible.
"""

import numpy as np

cimport numpy as cnp


def conv3x3(cnp.ndarray[cnp.float32_t, ndim=3] x,
            cnp.ndarray[cnp.float32_t, ndim=4] w,
            cnp.ndarray[cnp.float32_t, ndim=1] b,
            bint relu):
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0]
    cdef cnp.ndarray[cnp.float32_t, ndim=3] xp = np.zeros(
        (cin, h + 2, wd + 2), dtype=np.float32)
    xp[:, 1:h + 1, 1:wd + 1] = x
    cdef cnp.ndarray[cnp.float32_t, ndim=3] out = np.empty(
        (cout, h, wd), dtype=np.float32)
    cdef float[:, :, ::1] xv = xp
    cdef float[:, :, :, ::1] wv = w
    cdef float[::1] bv = b
    cdef float[:, :, ::1] ov = out
    cdef Py_ssize_t oc, ic, y, xx, ky, kx
    cdef float acc, wk

    with nogil:
        for oc in range(cout):
            for y in range(h):
                for xx in range(wd):
                    ov[oc, y, xx] = bv[oc]
            for ic in range(cin):
                for ky in range(3):
                    for kx in range(3):
                        wk = wv[oc, ic, ky, kx]
                        for y in range(h):
                            for xx in range(wd):
                                ov[oc, y, xx] = ov[oc, y, xx] + wk * xv[ic, y + ky, xx + kx]
            if relu:
                for y in range(h):
                    for xx in range(wd):
                        if ov[oc, y, xx] < 0.0:
                            ov[oc, y, xx] = 0.0
    return out


def conv1x1(cnp.ndarray[cnp.float32_t, ndim=3] x,
            cnp.ndarray[cnp.float32_t, ndim=4] w,
            cnp.ndarray[cnp.float32_t, ndim=1] b):
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0]
    cdef cnp.ndarray[cnp.float32_t, ndim=3] out = np.empty(
        (cout, h, wd), dtype=np.float32)
    cdef float[:, :, ::1] xv = x
    cdef float[:, :, :, ::1] wv = w
    cdef float[::1] bv = b
    cdef float[:, :, ::1] ov = out
    cdef Py_ssize_t oc, ic, y, xx
    cdef float wk

    with nogil:
        for oc in range(cout):
            for y in range(h):
                for xx in range(wd):
                    ov[oc, y, xx] = bv[oc]
            for ic in range(cin):
                wk = wv[oc, ic, 0, 0]
                for y in range(h):
                    for xx in range(wd):
                        ov[oc, y, xx] = ov[oc, y, xx] + wk * xv[ic, y, xx]
    return out


def maxpool2(cnp.ndarray[cnp.float32_t, ndim=3] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t h2 = h // 2, w2 = wd // 2
    cdef cnp.ndarray[cnp.float32_t, ndim=3] out = np.empty(
        (c, h2, w2), dtype=np.float32)
    cdef float[:, :, ::1] xv = x
    cdef float[:, :, ::1] ov = out
    cdef Py_ssize_t ic, y, xx
    cdef float m, v

    with nogil:
        for ic in range(c):
            for y in range(h2):
                for xx in range(w2):
                    m = xv[ic, 2 * y, 2 * xx]
                    v = xv[ic, 2 * y, 2 * xx + 1]
                    if v > m:
                        m = v
                    v = xv[ic, 2 * y + 1, 2 * xx]
                    if v > m:
                        m = v
                    v = xv[ic, 2 * y + 1, 2 * xx + 1]
                    if v > m:
                        m = v
                    ov[ic, y, xx] = m
    return out


def tconv3x3_s2(cnp.ndarray[cnp.float32_t, ndim=3] x,
                cnp.ndarray[cnp.float32_t, ndim=4] w,
                cnp.ndarray[cnp.float32_t, ndim=1] b):
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0]
    cdef Py_ssize_t h2 = 2 * h, w2 = 2 * wd
    cdef cnp.ndarray[cnp.float32_t, ndim=3] out = np.empty(
        (cout, h2, w2), dtype=np.float32)
    cdef float[:, :, ::1] xv = x
    cdef float[:, :, :, ::1] wv = w
    cdef float[::1] bv = b
    cdef float[:, :, ::1] ov = out
    cdef Py_ssize_t oc, ic, iy, ix, ky, kx, oy, ox
    cdef float wk

    with nogil:
        for oc in range(cout):
            for oy in range(h2):
                for ox in range(w2):
                    ov[oc, oy, ox] = bv[oc]
            for ic in range(cin):
                for ky in range(3):
                    for kx in range(3):
                        wk = wv[oc, ic, ky, kx]
                        # oy = 2*iy - 1 + ky must land inside the output.
                        for iy in range(h):
                            oy = 2 * iy - 1 + ky
                            if oy < 0 or oy >= h2:
                                continue
                            for ix in range(wd):
                                ox = 2 * ix - 1 + kx
                                if ox < 0 or ox >= w2:
                                    continue
                                ov[oc, oy, ox] = ov[oc, oy, ox] + wk * xv[ic, iy, ix]
    return out
