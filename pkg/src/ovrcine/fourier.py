"""Centered orthonormal 2-D FFT pair.

All k-space in this package lives on the centered grid: the DC sample sits at
index (n_pe // 2, n_fe // 2). Both transforms act on the last two axes and
preserve the l2 norm, so ifft2c is the exact adjoint (and inverse) of fft2c.
"""

import numpy as np

__all__ = ["fft2c", "ifft2c"]

_AXES = (-2, -1)


def fft2c(img):
    """Image -> centered k-space, orthonormal scaling."""
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(img, axes=_AXES), axes=_AXES, norm="ortho"),
        axes=_AXES,
    )


def ifft2c(ksp):
    """Centered k-space -> image; exact inverse of fft2c."""
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(ksp, axes=_AXES), axes=_AXES, norm="ortho"),
        axes=_AXES,
    )
