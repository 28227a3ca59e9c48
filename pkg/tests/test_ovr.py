"""Outer-volume masks, detection, subtraction, and composition."""

import numpy as np
import pytest

from ovrcine.classical import CgConfig, cg_sense
from ovrcine.encoding import apply_E
from ovrcine.ovr import (
    RoiDetectionWarning,
    compose_final,
    make_ovr_mask,
    mask_sensitivities,
    subtract_outer_volume,
    threshold_roi_detect,
)
from ovrcine.phantom import make_coil_maps


def test_mask_geometry():
    m = make_ovr_mask((20, 30), (64, 48), margin=2)
    assert m.mask.shape == (64, 48)
    assert m.roi_rows == (18, 32)
    assert m.n_roi_rows == 15
    assert np.all(m.mask[18:33] == 0.0)
    assert np.all(m.mask[:18] == 1.0) and np.all(m.mask[33:] == 1.0)
    assert np.array_equal(m.mask + m.roi_indicator, np.ones((64, 48)))


def test_mask_zero_margin_and_errors():
    m = make_ovr_mask((5, 5), (16, 16), margin=0)
    assert m.roi_rows == (5, 5) and m.n_roi_rows == 1
    with pytest.raises(ValueError, match="empty ROI"):
        make_ovr_mask((10, 5), (16, 16))
    with pytest.raises(ValueError, match="margin"):
        make_ovr_mask((5, 10), (16, 16), margin=-1)
    with pytest.raises(ValueError, match="outside"):
        make_ovr_mask((1, 10), (16, 16), margin=2)
    with pytest.raises(ValueError, match="outside"):
        make_ovr_mask((5, 15), (16, 16), margin=1)


def test_roi_detection_finds_varying_band(rng):
    stack = np.ones((10, 64, 32))
    stack += 0.001 * rng.normal(size=stack.shape)  # sub-threshold jitter
    for t in range(10):
        stack[t, 20:31, 5:25] += np.sin(0.7 * t)
    lo, hi = threshold_roi_detect(stack, theta=0.3)
    assert lo == 20 and hi == 30


def test_roi_detection_threshold_widens_band(rng):
    stack = np.zeros((8, 32, 16))
    for t in range(8):
        stack[t, 10:14] += np.cos(0.9 * t)
        stack[t, 14:20] += 0.2 * np.cos(0.9 * t)
    tight = threshold_roi_detect(stack, theta=0.5)
    loose = threshold_roi_detect(stack, theta=0.1)
    assert tight == (10, 13)
    assert loose == (10, 19)


def test_roi_detection_flat_series_falls_back():
    with pytest.warns(RoiDetectionWarning):
        lo, hi = threshold_roi_detect(np.ones((5, 60, 20)))
    assert (lo, hi) == (20, 39)


def test_roi_detection_rejects_bad_stack():
    with pytest.raises(ValueError):
        threshold_roi_detect(np.ones((60, 20)))
    with pytest.raises(ValueError):
        threshold_roi_detect(np.ones((1, 60, 20)))


def test_subtraction_reduces_static_scene_to_roi_content(rng):
    dims = (32, 32)
    img = rng.normal(size=dims) + 1j * rng.normal(size=dims)
    sens = make_coil_maps(4, dims)
    lines = np.arange(1, 32, 2)
    mask = make_ovr_mask((12, 19), dims, margin=0)
    y = apply_E(img, sens, lines)
    background = sens * img[None]  # exact background, whole scene static
    y_ovr = subtract_outer_volume(y, background, mask, lines)
    expected = apply_E(mask.roi_indicator * img, sens, lines)
    assert np.max(np.abs(y_ovr - expected)) < 1e-12


def test_subtraction_validates_shapes(rng):
    dims = (16, 16)
    sens = make_coil_maps(2, dims)
    mask = make_ovr_mask((5, 9), dims, margin=0)
    y = np.zeros((2, 8, 16), dtype=np.complex128)
    with pytest.raises(ValueError):
        subtract_outer_volume(y, np.zeros((2, 8, 8)), mask, np.arange(0, 16, 2))


def test_masked_maps_zero_outside_roi():
    dims = (24, 24)
    sens = make_coil_maps(3, dims)
    mask = make_ovr_mask((8, 15), dims, margin=1)
    masked = mask_sensitivities(sens, mask)
    assert np.all(masked[:, : mask.roi_rows[0]] == 0)
    assert np.all(masked[:, mask.roi_rows[1] + 1 :] == 0)
    inside = slice(mask.roi_rows[0], mask.roi_rows[1] + 1)
    assert np.array_equal(masked[:, inside], sens[:, inside])


def test_masked_maps_cg_recovers_roi_band(rng):
    # end to end on a static scene: subtract, then solve the small problem
    dims = (32, 32)
    img = rng.normal(size=dims) + 1j * rng.normal(size=dims)
    sens = make_coil_maps(4, dims)
    lines = np.arange(0, 32, 2)
    mask = make_ovr_mask((12, 21), dims, margin=2)
    y = apply_E(img, sens, lines)
    y_ovr = subtract_outer_volume(y, sens * img[None], mask, lines)
    masked = mask_sensitivities(sens, mask)
    x = cg_sense(y_ovr, masked, lines, CgConfig(max_iters=60, rel_tol=1e-12))
    roi_img = mask.roi_indicator * img
    assert np.linalg.norm(x - roi_img) / np.linalg.norm(roi_img) < 1e-6


def test_compose_final_splices_background(rng):
    dims = (16, 16)
    mask = make_ovr_mask((6, 9), dims, margin=0)
    x = rng.normal(size=dims) + 1j * rng.normal(size=dims)
    bg = rng.normal(size=dims) + 1j * rng.normal(size=dims)
    out = compose_final(x, bg, mask)
    assert np.array_equal(out[6:10], x[6:10])
    assert np.max(np.abs(out[:6] - (x[:6] + bg[:6]))) < 1e-15
    with pytest.raises(ValueError):
        compose_final(x, bg[:8], mask)
