"""PSNR and SSIM conventions."""

import numpy as np
import pytest

from ovrcine.metrics import PSNR_CAP, MetricsRow, psnr, ssim


def _smooth(dims=(48, 48), seed=5):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0 : dims[0], 0 : dims[1]]
    img = np.zeros(dims)
    for _ in range(4):
        cy, cx = rng.uniform(10, dims[0] - 10, size=2)
        img += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 40.0)
    return img


def test_psnr_identical_hits_cap():
    img = _smooth()
    assert psnr(img, img) == PSNR_CAP
    assert psnr(img, img + 0j) == PSNR_CAP


def test_psnr_one_percent_error_is_40db():
    ref = np.ones((32, 32))
    est = np.full((32, 32), 0.99)
    assert abs(psnr(ref, est) - 40.0) < 1e-12


def test_psnr_matches_direct_formula(rng):
    ref = _smooth(seed=2) * np.exp(1j * 0.4)
    est = ref + 0.01 * (rng.normal(size=ref.shape) + 1j * rng.normal(size=ref.shape))
    r, e = np.abs(ref), np.abs(est)
    expected = 20.0 * np.log10(r.max() / np.sqrt(np.mean((r - e) ** 2)))
    assert abs(psnr(ref, est) - expected) < 1e-9


def test_psnr_region_ignores_outside_error(rng):
    ref = _smooth(seed=3)
    est = ref.copy()
    est[:10] += 0.5  # damage above the band only
    band = (20, 35)
    assert psnr(ref, est, region=band) == PSNR_CAP
    assert psnr(ref, est) < 30.0
    # damage inside the band moves the region score
    est2 = ref.copy()
    est2[25] += 0.5
    assert psnr(ref, est2, region=band) < psnr(ref, est2, region=(0, 10))


def test_psnr_region_uses_region_peak():
    ref = np.zeros((32, 32))
    ref[5, 5] = 10.0  # global peak outside the band
    ref[20:25] = 1.0
    est = ref.copy()
    est[22] = 0.9
    full_band = psnr(ref, est, region=(20, 24))
    manual = 20.0 * np.log10(1.0 / np.sqrt(np.mean((ref[20:25] - est[20:25]) ** 2)))
    assert abs(full_band - manual) < 1e-9


def test_psnr_rejects_degenerate_reference():
    with pytest.raises(ValueError):
        psnr(np.zeros((8, 8)), np.ones((8, 8)))
    ref = np.zeros((16, 16))
    ref[0, 0] = 1.0
    with pytest.raises(ValueError):
        psnr(ref, ref, region=(5, 10))
    with pytest.raises(ValueError):
        psnr(np.ones((8, 8)), np.ones((8, 4)))


def test_ssim_identical_is_one():
    img = _smooth()
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_is_low():
    img = _smooth()
    assert ssim(img, img.max() - img) < 0.5


def test_ssim_small_offset_stays_high():
    # offset on a bright base perturbs luminance only a little; near-zero
    # regions would legitimately tank the luminance term instead
    img = _smooth() + 0.5
    assert ssim(img, img + 0.1) > 0.9


def test_ssim_orders_degradations(rng):
    img = _smooth()
    mild = img + 0.02 * rng.normal(size=img.shape)
    harsh = img + 0.3 * rng.normal(size=img.shape)
    assert ssim(img, mild) > ssim(img, harsh)


def test_ssim_guards():
    with pytest.raises(ValueError, match="window"):
        ssim(np.ones((8, 8)), np.ones((8, 8)))
    with pytest.raises(ValueError, match="zero"):
        ssim(np.zeros((16, 16)), np.ones((16, 16)))


def test_metrics_row_csv_round_trip():
    row = MetricsRow(frame=3, method="cgsense", psnr_db=31.25, roi_psnr_db=28.5, ssim=0.912345)
    line = row.to_csv()
    assert line == "3,cgsense,31.2500,28.5000,0.912345"
    assert MetricsRow.CSV_HEADER.split(",") == ["frame", "method", "psnr_db", "roi_psnr_db", "ssim"]
