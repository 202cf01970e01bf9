# Compiled transposed-convolution kernels. Same contracts as _kernels_np;
# serial loops over packed channel-last buffers, so the inner dimension is
# contiguous and the summation order is fixed and reproducible.

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv_transpose2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                             int stride, int padding, int output_padding):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], hi = x.shape[2], wi = x.shape[3]
    cdef Py_ssize_t cout = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (hi - 1) * stride + kh - 2 * padding + output_padding
    cdef Py_ssize_t wo = (wi - 1) * stride + kw - 2 * padding + output_padding
    # channel-last copies: the ci loop below runs over unit stride
    xt_arr = np.ascontiguousarray(np.transpose(np.asarray(x), (0, 2, 3, 1)))
    wt_arr = np.ascontiguousarray(np.transpose(np.asarray(w), (2, 3, 1, 0)))
    cdef double[:, :, :, ::1] xt = xt_arr
    cdef double[:, :, :, ::1] wt = wt_arr
    out_arr = np.zeros((n, cout, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t s, i, j, a, b, ci, co, r, c
    cdef double acc
    with nogil:
        for s in range(n):
            for i in range(hi):
                for j in range(wi):
                    for a in range(kh):
                        r = i * stride + a - padding
                        if r < 0 or r >= ho:
                            continue
                        for b in range(kw):
                            c = j * stride + b - padding
                            if c < 0 or c >= wo:
                                continue
                            for co in range(cout):
                                acc = 0.0
                                for ci in range(cin):
                                    acc += xt[s, i, j, ci] * wt[a, b, co, ci]
                                out[s, co, r, c] += acc
    return out_arr


def conv_transpose2d_grad_input(double[:, :, :, ::1] gout, double[:, :, :, ::1] w,
                                int stride, int padding, Py_ssize_t hi, Py_ssize_t wi):
    cdef Py_ssize_t n = gout.shape[0], cout = gout.shape[1], ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t cin = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    wt_arr = np.ascontiguousarray(np.transpose(np.asarray(w), (2, 3, 1, 0)))
    cdef double[:, :, :, ::1] wt = wt_arr
    gx_arr = np.zeros((n, cin, hi, wi), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    buf_arr = np.zeros(cin, dtype=np.float64)
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t s, i, j, a, b, ci, co, r, c
    cdef double g
    with nogil:
        for s in range(n):
            for i in range(hi):
                for j in range(wi):
                    for ci in range(cin):
                        buf[ci] = 0.0
                    for a in range(kh):
                        r = i * stride + a - padding
                        if r < 0 or r >= ho:
                            continue
                        for b in range(kw):
                            c = j * stride + b - padding
                            if c < 0 or c >= wo:
                                continue
                            for co in range(cout):
                                g = gout[s, co, r, c]
                                if g == 0.0:
                                    continue
                                for ci in range(cin):
                                    buf[ci] += g * wt[a, b, co, ci]
                    for ci in range(cin):
                        gx[s, ci, i, j] = buf[ci]
    return gx_arr


def conv_transpose2d_grad_weight(double[:, :, :, ::1] gout, double[:, :, :, ::1] x,
                                 int stride, int padding, int kernel):
    cdef Py_ssize_t n = gout.shape[0], cout = gout.shape[1], ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t cin = x.shape[1], hi = x.shape[2], wi = x.shape[3]
    cdef Py_ssize_t kh = kernel, kw = kernel
    xt_arr = np.ascontiguousarray(np.transpose(np.asarray(x), (0, 2, 3, 1)))
    cdef double[:, :, :, ::1] xt = xt_arr
    # accumulate channel-last, transpose back once at the end
    gwt_arr = np.zeros((kh, kw, cin, cout), dtype=np.float64)
    cdef double[:, :, :, ::1] gwt = gwt_arr
    grow_arr = np.zeros(cout, dtype=np.float64)
    cdef double[::1] grow = grow_arr
    cdef Py_ssize_t s, i, j, a, b, ci, co, r, c
    cdef double xv
    with nogil:
        for s in range(n):
            for i in range(hi):
                for j in range(wi):
                    for a in range(kh):
                        r = i * stride + a - padding
                        if r < 0 or r >= ho:
                            continue
                        for b in range(kw):
                            c = j * stride + b - padding
                            if c < 0 or c >= wo:
                                continue
                            for co in range(cout):
                                grow[co] = gout[s, co, r, c]
                            for ci in range(cin):
                                xv = xt[s, i, j, ci]
                                if xv == 0.0:
                                    continue
                                for co in range(cout):
                                    gwt[a, b, ci, co] += xv * grow[co]
    return np.ascontiguousarray(np.transpose(gwt_arr, (2, 3, 0, 1)))
