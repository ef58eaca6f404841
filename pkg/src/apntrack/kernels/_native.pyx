# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels: direct-loop conv2d and depthwise cross-correlation.

Same contracts as numpy_backend. Loops are ordered so the innermost
pass runs along contiguous rows; work is split over independent output
slices, so results are bit-identical run to run regardless of the
thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

NAME = "native"


def conv_output_size(size, kernel, stride, padding):
    out = (size + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ValueError(
            f"convolution output collapses: input {size}, kernel {kernel}, "
            f"stride {stride}, padding {padding}"
        )
    return out


cdef inline Py_ssize_t _ox_lo(Py_ssize_t padding, Py_ssize_t kx, Py_ssize_t stride) nogil:
    if padding - kx <= 0:
        return 0
    return (padding - kx + stride - 1) // stride


cdef inline Py_ssize_t _ox_hi(Py_ssize_t W, Py_ssize_t padding, Py_ssize_t kx,
                              Py_ssize_t stride, Py_ssize_t OW) nogil:
    cdef Py_ssize_t hi = (W - 1 - kx + padding) // stride + 1
    if hi > OW:
        return OW
    return hi


def conv2d_forward(x, w, b, long stride, long padding):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t B = xv.shape[0], CI = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t CO = wv.shape[0], KH = wv.shape[2], KW = wv.shape[3]
    cdef Py_ssize_t OH = (H + 2 * padding - KH) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * padding - KW) // stride + 1
    out = np.empty((B, CO, OH, OW), dtype=np.float64)
    cdef double[:, :, :, ::1] yv = out
    cdef Py_ssize_t bo, bi, oc, oy, ox, ic, ky, kx, iy, base, lo, hi
    cdef double wval, bias
    with nogil:
        for bo in prange(B * CO, schedule='static'):
            bi = bo // CO
            oc = bo % CO
            bias = bv[oc]
            for oy in range(OH):
                for ox in range(OW):
                    yv[bi, oc, oy, ox] = bias
            for ic in range(CI):
                for ky in range(KH):
                    for kx in range(KW):
                        wval = wv[oc, ic, ky, kx]
                        lo = _ox_lo(padding, kx, stride)
                        hi = _ox_hi(W, padding, kx, stride, OW)
                        base = kx - padding
                        for oy in range(OH):
                            iy = oy * stride - padding + ky
                            if iy < 0 or iy >= H:
                                continue
                            if stride == 1:
                                for ox in range(lo, hi):
                                    yv[bi, oc, oy, ox] += wval * xv[bi, ic, iy, ox + base]
                            else:
                                for ox in range(lo, hi):
                                    yv[bi, oc, oy, ox] += wval * xv[bi, ic, iy, ox * stride + base]
    return out


def conv2d_backward(x, w, long stride, long padding, gy, bint need_gx=True, bint need_gw=True):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] gyv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t B = xv.shape[0], CI = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t CO = wv.shape[0], KH = wv.shape[2], KW = wv.shape[3]
    cdef Py_ssize_t OH = gyv.shape[2], OW = gyv.shape[3]

    gb_arr = np.zeros(CO, dtype=np.float64)
    cdef double[::1] gbv = gb_arr
    cdef Py_ssize_t bi, oc, oy, ox, ic, ky, kx, iy, base, lo, hi, bc
    cdef double acc, wval, g

    gw_arr = None
    cdef double[:, :, :, ::1] gwv
    if need_gw:
        gw_arr = np.zeros((CO, CI, KH, KW), dtype=np.float64)
        gwv = gw_arr
        with nogil:
            for oc in prange(CO, schedule='static'):
                acc = 0.0
                for bi in range(B):
                    for oy in range(OH):
                        for ox in range(OW):
                            acc = acc + gyv[bi, oc, oy, ox]
                gbv[oc] = acc
                for ic in range(CI):
                    for ky in range(KH):
                        for kx in range(KW):
                            acc = 0.0
                            lo = _ox_lo(padding, kx, stride)
                            hi = _ox_hi(W, padding, kx, stride, OW)
                            base = kx - padding
                            for bi in range(B):
                                for oy in range(OH):
                                    iy = oy * stride - padding + ky
                                    if iy < 0 or iy >= H:
                                        continue
                                    if stride == 1:
                                        for ox in range(lo, hi):
                                            acc = acc + gyv[bi, oc, oy, ox] * xv[bi, ic, iy, ox + base]
                                    else:
                                        for ox in range(lo, hi):
                                            acc = acc + gyv[bi, oc, oy, ox] * xv[bi, ic, iy, ox * stride + base]
                            gwv[oc, ic, ky, kx] = acc
    else:
        with nogil:
            for oc in prange(CO, schedule='static'):
                acc = 0.0
                for bi in range(B):
                    for oy in range(OH):
                        for ox in range(OW):
                            acc = acc + gyv[bi, oc, oy, ox]
                gbv[oc] = acc

    gx_arr = None
    cdef double[:, :, :, ::1] gxv
    if need_gx:
        gx_arr = np.zeros((B, CI, H, W), dtype=np.float64)
        gxv = gx_arr
        with nogil:
            for bc in prange(B * CI, schedule='static'):
                bi = bc // CI
                ic = bc % CI
                for oc in range(CO):
                    for ky in range(KH):
                        for kx in range(KW):
                            wval = wv[oc, ic, ky, kx]
                            lo = _ox_lo(padding, kx, stride)
                            hi = _ox_hi(W, padding, kx, stride, OW)
                            base = kx - padding
                            for oy in range(OH):
                                iy = oy * stride - padding + ky
                                if iy < 0 or iy >= H:
                                    continue
                                if stride == 1:
                                    for ox in range(lo, hi):
                                        gxv[bi, ic, iy, ox + base] += wval * gyv[bi, oc, oy, ox]
                                else:
                                    for ox in range(lo, hi):
                                        gxv[bi, ic, iy, ox * stride + base] += wval * gyv[bi, oc, oy, ox]
    return gx_arr, gw_arr, gb_arr


def dwxcorr_forward(x, z):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t ZH = zv.shape[2], ZW = zv.shape[3]
    cdef Py_ssize_t OH = H - ZH + 1, OW = W - ZW + 1
    out = np.empty((B, C, OH, OW), dtype=np.float64)
    cdef double[:, :, :, ::1] yv = out
    cdef Py_ssize_t bc, bi, c, oy, ox, u, v
    cdef double acc
    with nogil:
        for bc in prange(B * C, schedule='static'):
            bi = bc // C
            c = bc % C
            for oy in range(OH):
                for ox in range(OW):
                    acc = 0.0
                    for u in range(ZH):
                        for v in range(ZW):
                            acc = acc + xv[bi, c, oy + u, ox + v] * zv[bi, c, u, v]
                    yv[bi, c, oy, ox] = acc
    return out


def dwxcorr_backward(x, z, gy):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, :, :, ::1] gyv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t ZH = zv.shape[2], ZW = zv.shape[3]
    cdef Py_ssize_t OH = gyv.shape[2], OW = gyv.shape[3]
    gx_arr = np.zeros((B, C, H, W), dtype=np.float64)
    gz_arr = np.zeros((B, C, ZH, ZW), dtype=np.float64)
    cdef double[:, :, :, ::1] gxv = gx_arr
    cdef double[:, :, :, ::1] gzv = gz_arr
    cdef Py_ssize_t bc, bi, c, oy, ox, u, v
    cdef double g, acc
    with nogil:
        for bc in prange(B * C, schedule='static'):
            bi = bc // C
            c = bc % C
            for u in range(ZH):
                for v in range(ZW):
                    acc = 0.0
                    for oy in range(OH):
                        for ox in range(OW):
                            g = gyv[bi, c, oy, ox]
                            gxv[bi, c, oy + u, ox + v] += g * zv[bi, c, u, v]
                            acc = acc + g * xv[bi, c, oy + u, ox + v]
                    gzv[bi, c, u, v] = acc
    return gx_arr, gz_arr
