"""Vectorized numpy implementations of the hot numeric kernels.

All arrays are C-contiguous float64. Convolution uses im2col plus one
batched matmul so the heavy lifting lands in BLAS; the depthwise
cross-correlation contracts strided sliding windows.
"""

import numpy as np

NAME = "numpy"


def conv_output_size(size, kernel, stride, padding):
    out = (size + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ValueError(
            f"convolution output collapses: input {size}, kernel {kernel}, "
            f"stride {stride}, padding {padding}"
        )
    return out


def _windows(x, kh, kw, stride):
    """Sliding-window view (b, c, oh, ow, kh, kw) of an already padded input."""
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sb, sc, sh, sw = x.strides
    shape = (b, c, oh, ow, kh, kw)
    strides = (sb, sc, sh * stride, sw * stride, sh, sw)
    return np.lib.stride_tricks.as_strided(x, shape, strides, writeable=False)


def _pad(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, w, b, stride, padding):
    """Cross-correlation of w over x. x (B,Ci,H,W), w (Co,Ci,kh,kw), b (Co,)."""
    bs, ci, _, _ = x.shape
    co, _, kh, kw = w.shape
    xp = _pad(x, padding)
    win = _windows(xp, kh, kw, stride)
    _, _, oh, ow, _, _ = win.shape
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bs, oh * ow, ci * kh * kw)
    y = cols @ w.reshape(co, -1).T + b
    return np.ascontiguousarray(y.transpose(0, 2, 1).reshape(bs, co, oh, ow))


def conv2d_backward(x, w, stride, padding, gy, need_gx=True, need_gw=True):
    """Gradients of conv2d_forward w.r.t. (x, w, b) given upstream gy."""
    bs, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    _, _, oh, ow = gy.shape
    gy2 = gy.transpose(0, 2, 3, 1).reshape(bs, oh * ow, co)

    gb = gy.sum(axis=(0, 2, 3))

    gw = None
    if need_gw:
        xp = _pad(x, padding)
        win = _windows(xp, kh, kw, stride)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bs, oh * ow, ci * kh * kw)
        gw = (gy2.transpose(0, 2, 1) @ cols).sum(axis=0).reshape(w.shape)

    gx = None
    if need_gx:
        gcols = (gy2 @ w.reshape(co, -1)).reshape(bs, oh, ow, ci, kh, kw)
        gxp = np.zeros((bs, ci, h + 2 * padding, wd + 2 * padding))
        # scatter-add one kernel offset at a time; windows overlap, so no
        # strided trick here
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride] += (
                    gcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
                )
        if padding:
            gx = np.ascontiguousarray(gxp[:, :, padding:-padding, padding:-padding])
        else:
            gx = gxp
    return gx, gw, gb


def dwxcorr_forward(x, z):
    """Per-channel valid cross-correlation of template z over search x."""
    _, _, zh, zw = z.shape
    win = _windows(x, zh, zw, 1)
    return np.einsum("bcyxuv,bcuv->bcyx", win, z, optimize=True)


def dwxcorr_backward(x, z, gy):
    _, _, zh, zw = z.shape
    _, _, oh, ow = gy.shape
    win = _windows(x, zh, zw, 1)
    gz = np.einsum("bcyx,bcyxuv->bcuv", gy, win, optimize=True)
    gx = np.zeros_like(x)
    for u in range(zh):
        for v in range(zw):
            gx[:, :, u : u + oh, v : v + ow] += gy * z[:, :, u : u + 1, v : v + 1]
    return gx, gz
