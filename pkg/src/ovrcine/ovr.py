"""Outer-volume removal: rectangular ROI masks, k-space background
subtraction, sensitivity masking, and final image composition.

The outer volume is everything outside a band of PE rows around the moving
content. Subtracting the encoded (masked) background from measured k-space
leaves data explained by an ROI-supported image alone, which turns a
badly conditioned high-acceleration problem into a smaller well-posed one.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .fourier import fft2c
from .validation import check_lines, check_same_shape

__all__ = [
    "OvrMask",
    "make_ovr_mask",
    "threshold_roi_detect",
    "RoiDetectionWarning",
    "subtract_outer_volume",
    "mask_sensitivities",
    "compose_final",
]


class RoiDetectionWarning(RuntimeWarning):
    """ROI detection fell back to the central third of the FOV."""


@dataclass(frozen=True)
class OvrMask:
    """Binary outer-volume mask: 1 on rows to remove, 0 on the ROI band.

    roi_rows is the inclusive row interval on which the mask is zero (margin
    already applied). mask + roi_indicator == 1 everywhere.
    """

    mask: np.ndarray
    roi_rows: tuple

    @property
    def roi_indicator(self):
        return 1.0 - self.mask

    @property
    def n_roi_rows(self):
        return self.roi_rows[1] - self.roi_rows[0] + 1


def make_ovr_mask(roi_rows, dims, margin=2):
    """Rectangular outer-volume mask spanning the full FE width."""
    n_pe, n_fe = dims
    r_lo, r_hi = int(roi_rows[0]), int(roi_rows[1])
    if r_lo > r_hi:
        raise ValueError(f"empty ROI interval {roi_rows}")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    lo, hi = r_lo - margin, r_hi + margin
    if lo < 0 or hi >= n_pe:
        raise ValueError(f"ROI rows [{lo}, {hi}] fall outside the {n_pe}-row FOV")
    mask = np.ones((n_pe, n_fe), dtype=np.float64)
    mask[lo : hi + 1, :] = 0.0
    return OvrMask(mask=mask, roi_rows=(lo, hi))


def threshold_roi_detect(magnitude_series, theta=0.3):
    """Detect the moving-content row band from temporal variation.

    Takes a (frames, n_pe, n_fe) stack of coil-combined composite
    magnitudes, thresholds the per-row maximum of the temporal standard
    deviation at theta times its peak, and returns the tightest covering
    row interval. A flat series (no variation anywhere) falls back to the
    central third of the FOV with a warning.
    """
    mags = np.asarray(magnitude_series, dtype=np.float64)
    if mags.ndim != 3 or mags.shape[0] < 2:
        raise ValueError("need a (frames >= 2, n_pe, n_fe) magnitude stack")
    n_pe = mags.shape[1]
    row_score = mags.std(axis=0).max(axis=1)
    peak = row_score.max()
    if not np.isfinite(peak) or peak <= 0:
        warnings.warn("no temporal variation found; falling back to central third of FOV", RoiDetectionWarning)
        return (n_pe // 3, 2 * n_pe // 3 - 1)
    rows = np.flatnonzero(row_score >= theta * peak)
    return (int(rows[0]), int(rows[-1]))


def subtract_outer_volume(y, background, ovr_mask, lines):
    """Remove the encoded outer-volume background from sampled k-space.

    y_OVR = y - restrict(fft2c(mask * background_c)) per coil, where
    background holds composite-domain coil images.
    """
    y = np.asarray(y, dtype=np.complex128)
    background = np.asarray(background, dtype=np.complex128)
    check_same_shape(background[0], ovr_mask.mask, "background", "mask")
    lines = check_lines(lines, ovr_mask.mask.shape[0])
    return y - fft2c(ovr_mask.mask[None] * background)[:, lines, :]


def mask_sensitivities(sens, ovr_mask):
    """Zero coil maps over the outer volume.

    The masked variant deliberately breaks the unit-SOS property outside the
    ROI; reconstructions with it are constrained to ROI support.
    """
    sens = np.asarray(sens, dtype=np.complex128)
    check_same_shape(sens[0], ovr_mask.mask, "coil maps", "mask")
    return sens * ovr_mask.roi_indicator[None]


def compose_final(x_ovr, background_combined, ovr_mask):
    """Final image: OVR reconstruction plus masked combined background."""
    check_same_shape(x_ovr, background_combined, "reconstruction", "background")
    check_same_shape(x_ovr, ovr_mask.mask, "reconstruction", "mask")
    return x_ovr + ovr_mask.mask * background_combined
