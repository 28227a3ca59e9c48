"""Image quality metrics: PSNR (magnitude convention) and SSIM."""

from dataclasses import dataclass

import numpy as np

from .validation import check_same_shape

__all__ = ["psnr", "ssim", "MetricsRow", "PSNR_CAP"]

PSNR_CAP = 99.0


def _region_slice(arr, region):
    if region is None or region == "full":
        return arr
    lo, hi = region
    return arr[..., lo : hi + 1, :]


def psnr(ref, est, region=None):
    """Peak signal-to-noise ratio in dB over the full image or a row band.

    20*log10(peak(|ref|) / rmse(|ref| - |est|)), evaluated over region
    (None/"full", or an inclusive (r_lo, r_hi) row interval). Identical
    magnitudes report the 99 dB sentinel cap.
    """
    check_same_shape(ref, est, "ref", "est")
    r = np.abs(_region_slice(np.asarray(ref), region))
    e = np.abs(_region_slice(np.asarray(est), region))
    peak = r.max() if r.size else 0.0
    if r.size == 0 or peak <= 0:
        raise ValueError("reference region is empty or identically zero")
    rmse = np.sqrt(np.mean((r - e) ** 2))
    if rmse == 0:
        return PSNR_CAP
    return float(min(20.0 * np.log10(peak / rmse), PSNR_CAP))


def _gaussian_kernel(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _windowed_mean(img, kernel):
    """Separable valid-mode Gaussian filtering."""
    k = kernel.size
    v = np.lib.stride_tricks.sliding_window_view(img, k, axis=0)
    v = np.tensordot(v, kernel, axes=([-1], [0]))
    v = np.lib.stride_tricks.sliding_window_view(v, k, axis=1)
    return np.tensordot(v, kernel, axes=([-1], [0]))


def ssim(ref_mag, est_mag, k1=0.01, k2=0.03, win_size=11, sigma=1.5):
    """Mean structural similarity between two magnitude images.

    Both images are scaled by the reference peak so the dynamic range is 1;
    local statistics use a Gaussian window (valid-mode, no edge padding).
    """
    ref_mag = np.abs(np.asarray(ref_mag, dtype=np.float64))
    est_mag = np.abs(np.asarray(est_mag, dtype=np.float64))
    check_same_shape(ref_mag, est_mag, "ref", "est")
    if min(ref_mag.shape) < win_size:
        raise ValueError(f"images smaller than the {win_size}x{win_size} window")
    peak = ref_mag.max()
    if peak <= 0:
        raise ValueError("reference image is identically zero")
    x = ref_mag / peak
    y = est_mag / peak
    kern = _gaussian_kernel(win_size, sigma)
    mu_x = _windowed_mean(x, kern)
    mu_y = _windowed_mean(y, kern)
    xx = _windowed_mean(x * x, kern) - mu_x**2
    yy = _windowed_mean(y * y, kern) - mu_y**2
    xy = _windowed_mean(x * y, kern) - mu_x * mu_y
    c1, c2 = k1**2, k2**2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class MetricsRow:
    """One evaluation record: a method's scores on one frame."""

    frame: int
    method: str
    psnr_db: float
    roi_psnr_db: float
    ssim: float

    CSV_HEADER = "frame,method,psnr_db,roi_psnr_db,ssim"

    def to_csv(self):
        return f"{self.frame},{self.method},{self.psnr_db:.4f},{self.roi_psnr_db:.4f},{self.ssim:.6f}"
