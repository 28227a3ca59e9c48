"""Sampling schedules: lattice structure, tiling, retrospective subsetting."""

import numpy as np
import pytest

from ovrcine.sampling import make_schedule, retro_undersample


def test_basic_lattice():
    sched = make_schedule(64, 4, 8)
    for t in range(8):
        lines = np.asarray(sched.frame_lines(t))
        assert lines.size == 16
        assert np.all(lines % 4 == t % 4)
        assert np.all(np.diff(lines) == 4)


def test_offset0_shifts_pattern():
    a = make_schedule(32, 4, 4, offset0=0)
    b = make_schedule(32, 4, 4, offset0=2)
    assert np.array_equal(
        np.asarray(a.frame_lines(2)), np.asarray(b.frame_lines(0))
    )


def test_r_consecutive_frames_tile_kspace():
    for n_pe, R in [(64, 4), (64, 8), (32, 2), (48, 6)]:
        sched = make_schedule(n_pe, R, R + 3)
        for start in range(3):
            union = np.concatenate(
                [sched.frame_lines(t) for t in range(start, start + R)]
            )
            assert np.array_equal(np.sort(union), np.arange(n_pe))


def test_center_line_nearest():
    sched = make_schedule(64, 4, 8)
    for t in range(8):
        lines = np.asarray(sched.frame_lines(t))
        c = sched.frame_center_line(t)
        assert c in lines
        assert np.all(np.abs(lines - 32) >= abs(c - 32))


def test_make_schedule_validation():
    with pytest.raises(ValueError):
        make_schedule(63, 4, 8)  # R must divide n_pe
    with pytest.raises(ValueError):
        make_schedule(64, 4, 0)
    with pytest.raises(ValueError):
        make_schedule(64, 4, 8, offset0=4)


def test_retro_r8_from_64():
    base = make_schedule(64, 4, 16)
    retro = retro_undersample(base, 8)
    assert retro.R == 8
    # offsets {0,1,6,7} keep 8 lines (center line already on the lattice),
    # offsets {2,3,4,5} retain an extra center line -> 9
    sizes = [len(retro.frame_lines(t)) for t in range(8)]
    assert sizes == [8, 8, 9, 9, 9, 9, 8, 8]
    for t in range(16):
        lines = np.asarray(retro.frame_lines(t))
        base_lines = np.asarray(base.frame_lines(t))
        assert np.all(np.isin(lines, base_lines))  # subset of acquired
        assert retro.frame_center_line(t) in lines


def test_retro_center_is_nearest_acquired():
    base = make_schedule(64, 4, 16)
    retro = retro_undersample(base, 8)
    for t in range(16):
        base_lines = np.asarray(base.frame_lines(t))
        nearest = base_lines[np.argmin(np.abs(base_lines - 32))]
        assert retro.frame_center_line(t) == nearest


def test_retro_68_rows_gives_9_lines():
    # n_pe=68 is not divisible by 8; every frame ends up with exactly 9 lines
    base = make_schedule(68, 4, 8)
    retro = retro_undersample(base, 8)
    for t in range(8):
        assert len(retro.frame_lines(t)) == 9


def test_retro_validation():
    base = make_schedule(64, 4, 8)
    with pytest.raises(ValueError):
        retro_undersample(base, 6)  # not a multiple of base R
    with pytest.raises(ValueError):
        retro_undersample(base, 4)  # not a proper multiple
    retro = retro_undersample(base, 8)
    with pytest.raises(ValueError):
        retro_undersample(retro, 16)  # already retro


def test_frame_offset_cycles():
    sched = make_schedule(64, 8, 20, offset0=3)
    for t in range(20):
        assert sched.frame_offset(t) == (t + 3) % 8
