# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled offset-contraction kernels; see pure.py for the contract.

Loops run in a fixed order so results are deterministic run to run.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def offset_matmul_forward(double[:, :, :, ::1] vol,
                          long long[:, ::1] offsets,
                          double[:, :, ::1] weights):
    cdef Py_ssize_t h = vol.shape[0], w = vol.shape[1], d = vol.shape[2]
    cdef Py_ssize_t c_in = vol.shape[3], c_out = weights.shape[2]
    cdef Py_ssize_t n_off = offsets.shape[0]
    out_arr = np.zeros((h, w, d, c_out), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t o, i, j, l, ci, co
    cdef long long ox, oy, oz
    cdef Py_ssize_t i0, i1, j0, j1, l0, l1
    cdef double v
    for o in range(n_off):
        ox = offsets[o, 0]
        oy = offsets[o, 1]
        oz = offsets[o, 2]
        i0 = -ox if ox < 0 else 0
        i1 = h - ox if ox > 0 else h
        j0 = -oy if oy < 0 else 0
        j1 = w - oy if oy > 0 else w
        l0 = -oz if oz < 0 else 0
        l1 = d - oz if oz > 0 else d
        for i in range(i0, i1):
            for j in range(j0, j1):
                for l in range(l0, l1):
                    for ci in range(c_in):
                        v = vol[i + ox, j + oy, l + oz, ci]
                        for co in range(c_out):
                            out[i, j, l, co] += v * weights[o, ci, co]
    return out_arr


def offset_matmul_backward_data(double[:, :, :, ::1] dout,
                                long long[:, ::1] offsets,
                                double[:, :, ::1] weights):
    cdef Py_ssize_t h = dout.shape[0], w = dout.shape[1], d = dout.shape[2]
    cdef Py_ssize_t c_out = dout.shape[3], c_in = weights.shape[1]
    cdef Py_ssize_t n_off = offsets.shape[0]
    dvol_arr = np.zeros((h, w, d, c_in), dtype=np.float64)
    cdef double[:, :, :, ::1] dvol = dvol_arr
    cdef Py_ssize_t o, i, j, l, ci, co
    cdef long long ox, oy, oz
    cdef Py_ssize_t i0, i1, j0, j1, l0, l1
    cdef double g
    for o in range(n_off):
        ox = offsets[o, 0]
        oy = offsets[o, 1]
        oz = offsets[o, 2]
        i0 = -ox if ox < 0 else 0
        i1 = h - ox if ox > 0 else h
        j0 = -oy if oy < 0 else 0
        j1 = w - oy if oy > 0 else w
        l0 = -oz if oz < 0 else 0
        l1 = d - oz if oz > 0 else d
        for i in range(i0, i1):
            for j in range(j0, j1):
                for l in range(l0, l1):
                    for co in range(c_out):
                        g = dout[i, j, l, co]
                        for ci in range(c_in):
                            dvol[i + ox, j + oy, l + oz, ci] += g * weights[o, ci, co]
    return dvol_arr


def offset_matmul_backward_weights(double[:, :, :, ::1] vol,
                                   double[:, :, :, ::1] dout,
                                   long long[:, ::1] offsets):
    cdef Py_ssize_t h = vol.shape[0], w = vol.shape[1], d = vol.shape[2]
    cdef Py_ssize_t c_in = vol.shape[3], c_out = dout.shape[3]
    cdef Py_ssize_t n_off = offsets.shape[0]
    dw_arr = np.zeros((n_off, c_in, c_out), dtype=np.float64)
    cdef double[:, :, ::1] dw = dw_arr
    cdef Py_ssize_t o, i, j, l, ci, co
    cdef long long ox, oy, oz
    cdef Py_ssize_t i0, i1, j0, j1, l0, l1
    cdef double v
    for o in range(n_off):
        ox = offsets[o, 0]
        oy = offsets[o, 1]
        oz = offsets[o, 2]
        i0 = -ox if ox < 0 else 0
        i1 = h - ox if ox > 0 else h
        j0 = -oy if oy < 0 else 0
        j1 = w - oy if oy > 0 else w
        l0 = -oz if oz < 0 else 0
        l1 = d - oz if oz > 0 else d
        for i in range(i0, i1):
            for j in range(j0, j1):
                for l in range(l0, l1):
                    for ci in range(c_in):
                        v = vol[i + ox, j + oy, l + oz, ci]
                        for co in range(c_out):
                            dw[o, ci, co] += v * dout[i, j, l, co]
    return dw_arr
