"""Input validation helpers shared by the functional core and the estimators."""

import numpy as np

__all__ = [
    "check_finite",
    "as_complex_image",
    "as_coil_images",
    "check_coil_maps",
    "check_lines",
    "check_same_shape",
]


def check_finite(arr, name="array"):
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr.view(np.float64) if arr.dtype == np.complex128 else arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_complex_image(x, name="image"):
    """Coerce to a finite 2-D complex128 array."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    x = np.ascontiguousarray(x, dtype=np.complex128)
    return check_finite(x, name)


def as_coil_images(y, name="coil images"):
    """Coerce to a finite 3-D (coils, rows, cols) complex128 array."""
    y = np.asarray(y)
    if y.ndim != 3:
        raise ValueError(f"{name} must be 3-D (coils, rows, cols), got shape {y.shape}")
    y = np.ascontiguousarray(y, dtype=np.complex128)
    return check_finite(y, name)


def check_coil_maps(sens, dims=None, require_sos_one=False, tol=1e-12, name="coil maps"):
    """Validate coil sensitivity maps, optionally enforcing unit sum-of-squares.

    Masked maps (zeroed rows) waive the SOS requirement, so require_sos_one
    is only set by callers that demand full maps.
    """
    sens = as_coil_images(sens, name)
    if dims is not None and sens.shape[1:] != tuple(dims):
        raise ValueError(f"{name} shape {sens.shape[1:]} does not match image dims {tuple(dims)}")
    if require_sos_one:
        sos = np.sum(np.abs(sens) ** 2, axis=0)
        if not np.allclose(sos, 1.0, atol=tol):
            raise ValueError(f"{name} sum-of-squares deviates from 1 by up to {np.max(np.abs(sos - 1.0)):.3e}")
    return sens


def check_lines(lines, n_pe, name="lines"):
    """Validate a strictly increasing PE-line index set within [0, n_pe)."""
    lines = np.asarray(lines, dtype=np.int64)
    if lines.ndim != 1 or lines.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D index array")
    if np.any(lines < 0) or np.any(lines >= n_pe):
        raise ValueError(f"{name} indices must lie in [0, {n_pe})")
    if np.any(np.diff(lines) <= 0):
        raise ValueError(f"{name} must be strictly increasing (sorted, unique)")
    return lines


def check_same_shape(a, b, name_a="a", name_b="b"):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{name_a} shape {np.shape(a)} != {name_b} shape {np.shape(b)}")
