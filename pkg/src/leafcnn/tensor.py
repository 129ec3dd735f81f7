"""Dense tensor primitives.

Tensors are plain :class:`numpy.ndarray` values in NHWC row-major layout.
Training and inference run in float32; gradient checks cast the whole
model to float64 (see :meth:`leafcnn.model.Sequential.astype`).

Convolutions use "same" padding with stride 1. For an even kernel the
padding is asymmetric: ``(k - 1) // 2`` rows/cols on top/left and the
rest on bottom/right, so a 2x2 kernel pads 0 before and 1 after.
"""

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, ParameterError

DEFAULT_DTYPE = np.float32


class Shape4(NamedTuple):
    n: int
    h: int
    w: int
    c: int

    @classmethod
    def of(cls, x):
        if x.ndim != 4:
            raise DimensionError(f"expected a 4-D NHWC tensor, got shape {x.shape}")
        shape = cls(*x.shape)
        if min(shape) < 1:
            raise DimensionError(f"all dimensions must be >= 1, got {tuple(shape)}")
        return shape


def as_tensor(data, dtype=DEFAULT_DTYPE):
    """Return ``data`` as a contiguous array of ``dtype``."""
    return np.ascontiguousarray(data, dtype=dtype)


def matmul(a, b):
    """Matrix product of a ``[M, K]`` and a ``[K, N]`` tensor."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def same_padding(kernel):
    """(before, after) zero padding that keeps spatial size at stride 1."""
    if kernel < 1:
        raise ParameterError(f"kernel size must be >= 1, got {kernel}")
    before = (kernel - 1) // 2
    return before, kernel - 1 - before


def pad_same(x, kernel=(2, 2)):
    (top, bottom), (left, right) = same_padding(kernel[0]), same_padding(kernel[1])
    return np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))


def im2col(x, kernel=(2, 2)):
    """Unroll "same"-padded receptive fields into rows.

    Returns an array of shape ``(N*H*W, kh*kw*C)``. Row ``(n, i, j)`` holds
    the ``kh x kw x C`` patch whose top-left corner sits at padded position
    ``(i, j)``, flattened in ``(di, dj, c)`` order. Out-of-bounds reads are 0.
    """
    n, h, w, c = Shape4.of(x)
    kh, kw = kernel
    xp = pad_same(x, kernel)
    # windows: (N, H, W, C, kh, kw)
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = windows.transpose(0, 1, 2, 4, 5, 3)
    return cols.reshape(n * h * w, kh * kw * c)


def col2im(cols, x_shape, kernel=(2, 2)):
    """Adjoint of :func:`im2col`: scatter-add patch rows back onto the input grid."""
    n, h, w, c = x_shape
    kh, kw = kernel
    if cols.shape != (n * h * w, kh * kw * c):
        raise DimensionError(
            f"col2im expects {(n * h * w, kh * kw * c)} for input {tuple(x_shape)}, got {cols.shape}"
        )
    (top, bottom), (left, right) = same_padding(kh), same_padding(kw)
    patches = cols.reshape(n, h, w, kh, kw, c)
    xp = np.zeros((n, h + top + bottom, w + left + right, c), dtype=cols.dtype)
    for di in range(kh):
        for dj in range(kw):
            xp[:, di : di + h, dj : dj + w, :] += patches[:, :, :, di, dj, :]
    return xp[:, top : top + h, left : left + w, :]
