"""Pure-numpy kernels for the surrogate forward pass.

This is the fallback backend used when the compiled extension is not
available; both backends implement the same four operations on float32
C-contiguous arrays and must agree with the direct-convolution oracle to
32-bit accuracy.  Convolutions are evaluated as nine shifted GEMMs
(one per kernel tap), which keeps the accumulation order fixed.
"""

import numpy as np


def _check(x, w, b):
    assert x.dtype == np.float32 and w.dtype == np.float32
    assert b.dtype == np.float32


def conv3x3(x, w, b, relu):
    """3x3 convolution with padding 1; optional rectification.

    x: (Cin, H, W), w: (Cout, Cin, 3, 3), b: (Cout,) -> (Cout, H, W)
    """
    _check(x, w, b)
    cin, h, wd = x.shape
    cout = w.shape[0]
    xp = np.zeros((cin, h + 2, wd + 2), dtype=np.float32)
    xp[:, 1:-1, 1:-1] = x
    out = np.broadcast_to(b[:, None], (cout, h * wd)).copy()
    for ky in range(3):
        for kx in range(3):
            patch = xp[:, ky : ky + h, kx : kx + wd].reshape(cin, h * wd)
            out += w[:, :, ky, kx] @ patch
    out = out.reshape(cout, h, wd)
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


def conv1x1(x, w, b):
    """1x1 convolution (the classifier head), no activation."""
    _check(x, w, b)
    cin, h, wd = x.shape
    cout = w.shape[0]
    out = w.reshape(cout, cin) @ x.reshape(cin, h * wd)
    out += b[:, None]
    return out.reshape(cout, h, wd)


def maxpool2(x):
    """2x2 max pooling with stride 2."""
    c, h, wd = x.shape
    assert h % 2 == 0 and wd % 2 == 0
    return x.reshape(c, h // 2, 2, wd // 2, 2).max(axis=(2, 4))


def _tslices(k, n):
    # Output/input row ranges for transposed-conv tap k: oy = 2*iy - 1 + k.
    if k == 0:
        return slice(1, 2 * n - 1, 2), slice(1, n)
    if k == 1:
        return slice(0, 2 * n, 2), slice(0, n)
    return slice(1, 2 * n, 2), slice(0, n)


def tconv3x3_s2(x, w, b):
    """3x3 transposed convolution, stride 2, padding 1, output padding 1.

    Doubles the spatial size: (Cin, H, W) -> (Cout, 2H, 2W).  The kernel
    is stored (Cout, Cin, 3, 3); output position oy = 2*iy - 1 + ky.
    """
    _check(x, w, b)
    cin, h, wd = x.shape
    cout = w.shape[0]
    out = np.broadcast_to(
        b[:, None, None], (cout, 2 * h, 2 * wd)
    ).copy()
    for ky in range(3):
        oys, iys = _tslices(ky, h)
        for kx in range(3):
            oxs, ixs = _tslices(kx, wd)
            contrib = np.tensordot(w[:, :, ky, kx], x[:, iys, ixs], axes=(1, 0))
            out[:, oys, oxs] += contrib
    return out
