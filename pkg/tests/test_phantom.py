"""Phantom generator: geometry, supports, coil map constraints, acquisition."""

import numpy as np
import pytest

from ovrcine.phantom import (
    PhantomConfig,
    make_coil_maps,
    make_phantom,
    noise_sigma_for_snr,
    simulate_acquisition,
)
from ovrcine.sampling import make_schedule


def test_config_validation():
    with pytest.raises(ValueError):
        PhantomConfig(dims=(8, 8))
    with pytest.raises(ValueError):
        PhantomConfig(contraction=0.7)
    with pytest.raises(ValueError):
        PhantomConfig(period=2)
    with pytest.raises(ValueError):
        PhantomConfig(heart_radius=40.0)  # does not fit in the FOV


def test_supports_disjoint(desk):
    truth = desk["truth"]
    stat = np.abs(truth.stationary) > 0
    for t in range(0, 48, 5):
        mov = np.abs(truth.moving[t]) > 0
        assert not np.any(stat & mov)


def test_roi_rows_cover_moving_support(desk):
    truth = desk["truth"]
    rows = np.where(np.any(np.abs(truth.moving) > 0, axis=(0, 2)))[0]
    lo, hi = truth.roi_rows
    assert lo <= rows.min() and rows.max() <= hi
    # margin of 2 rows on each side
    assert rows.min() - lo == 2 and hi - rows.max() == 2


def test_heart_contracts_periodically(desk):
    truth = desk["truth"]
    pc = desk["config"]
    areas = [(np.abs(truth.moving[t]) > 0).sum() for t in range(pc.n_frames)]
    # period-12 cycle: area at t and t+12 match
    for t in range(12):
        assert areas[t] == areas[t + 12]
    assert max(areas) > 1.5 * min(areas)


def test_frames_combine_components(desk):
    truth = desk["truth"]
    for t in (0, 13, 30):
        assert np.allclose(
            truth.frame(t), truth.moving[t] + truth.stationary_at(t), atol=1e-14
        )


def test_coil_maps_sos_and_smoothness(desk):
    sens = desk["sens"]
    sos = np.sum(np.abs(sens) ** 2, axis=0)
    assert np.max(np.abs(sos - 1.0)) < 1e-12
    # magnitude gradient bound: < 0.15 per pixel in each direction
    mag = np.abs(sens)
    assert np.max(np.abs(np.diff(mag, axis=1))) < 0.15
    assert np.max(np.abs(np.diff(mag, axis=2))) < 0.15


def test_coil_maps_validation():
    with pytest.raises(ValueError):
        make_coil_maps(0, (32, 32))
    maps = make_coil_maps(4, (32, 48))
    assert maps.shape == (4, 32, 48)


def test_noise_sigma_hits_target_snr(desk):
    truth, sens, sched = desk["truth"], desk["sens"], desk["sched4"]
    target = 30.0
    sigma = noise_sigma_for_snr(truth, sens, sched, target)
    ksp = simulate_acquisition(truth, sens, sched, noise_sigma=sigma, seed=5)
    clean = simulate_acquisition(truth, sens, sched)
    num = 0.0
    den = 0.0
    for t in range(sched.T):
        num += np.sum(np.abs(clean.frame(t)) ** 2)
        den += np.sum(np.abs(ksp.frame(t) - clean.frame(t)) ** 2)
    measured = 10 * np.log10(num / den)
    assert abs(measured - target) < 0.5


def test_simulation_deterministic(desk):
    truth, sens, sched = desk["truth"], desk["sens"], desk["sched4"]
    a = simulate_acquisition(truth, sens, sched, noise_sigma=0.01, seed=7)
    b = simulate_acquisition(truth, sens, sched, noise_sigma=0.01, seed=7)
    for t in range(0, sched.T, 7):
        assert np.array_equal(a.frame(t), b.frame(t))
    c = simulate_acquisition(truth, sens, sched, noise_sigma=0.01, seed=8)
    assert not np.array_equal(a.frame(0), c.frame(0))


def test_drift_moves_background():
    pc = PhantomConfig(drift_amplitude=1.5)
    truth = make_phantom(pc)
    assert truth.stationary_frames is not None
    diffs = [
        np.linalg.norm(truth.stationary_at(t) - truth.stationary_at(0))
        for t in range(1, 48, 5)
    ]
    assert max(diffs) > 0


def test_phases_vary_spatially(desk):
    truth = desk["truth"]
    frame = truth.frame(0)
    mask = np.abs(frame) > 1e-6
    phases = np.angle(frame[mask])
    assert phases.std() > 0.05
