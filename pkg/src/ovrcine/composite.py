"""Sliding-window composite images and their exact ghost decomposition.

Merging the sampled lines of R consecutive frames yields a fully sampled
composite. Because the object moves between frames, the composite image
splits into three parts: the temporal mean of the moving content, a
pseudo-periodic ghost (shifted, phase-modulated copies of the deviation from
that mean), and the stationary background. decompose_oracle computes the
three parts exactly from the phantom truth, entirely in the image domain for
lattice-sampled frames (circular row shifts with roots-of-unity weights), so
it is an independent check on the k-space merge path.
"""

from dataclasses import dataclass

import numpy as np

from .fourier import fft2c, ifft2c

__all__ = [
    "window_for",
    "assign_window_lines",
    "form_composite_kspace",
    "form_composite",
    "combine_coils",
    "decompose_oracle",
    "GhostDecomposition",
    "ghost_reference",
]


def window_for(t0, R, T):
    """Centered window of R frame indices around t0, clamped to [0, T)."""
    if T < R:
        raise ValueError(f"need at least R={R} frames, have T={T}")
    if not 0 <= t0 < T:
        raise ValueError(f"t0={t0} outside [0, {T})")
    start = min(max(t0 - R // 2, 0), T - R)
    return range(start, start + R)


def assign_window_lines(sched, t0):
    """Assign every PE line to the temporally nearest window frame sampling it.

    Ties go to the earlier frame. Returns {frame: sorted line array} covering
    the full PE grid exactly once.
    """
    best = {}
    for t in window_for(t0, sched.R, sched.T):
        key = (abs(t - t0), t)
        for k in sched.lines[t]:
            if k not in best or key < best[k]:
                best[k] = key
    if len(best) != sched.n_pe:
        missing = sorted(set(range(sched.n_pe)) - set(best))
        raise ValueError(f"window around t0={t0} does not tile the PE grid; missing rows {missing[:8]}")
    owners = {}
    for k, (_, t) in best.items():
        owners.setdefault(t, []).append(k)
    return {t: np.asarray(sorted(rows), dtype=np.int64) for t, rows in sorted(owners.items())}


def form_composite_kspace(ksp, t0):
    """Merge sampled rows of the window frames into full k-space per coil."""
    sched = ksp.schedule
    n_pe, n_fe = ksp.dims
    merged = np.zeros((ksp.n_coils, n_pe, n_fe), dtype=np.complex128)
    for t, rows in assign_window_lines(sched, t0).items():
        frame_lines = sched.frame_lines(t)
        pos = np.searchsorted(frame_lines, rows)
        merged[:, rows, :] = ksp.data[t][:, pos, :]
    return merged


def form_composite(ksp, t0):
    """Composite coil images around t0, shape (coils, n_pe, n_fe)."""
    return ifft2c(form_composite_kspace(ksp, t0))


def combine_coils(coil_images, sens):
    """Conjugate-map coil combination (exact for unit-SOS maps)."""
    return np.sum(np.conj(sens) * coil_images, axis=-3)


def _lattice_contribution(u, offset, R):
    """Image contribution of keeping only centered k-space rows k = offset (mod R).

    Equals ifft2c(mask * fft2c(u)) but computed with circular row shifts and
    roots-of-unity weights, with no FFT involved.
    """
    n_pe = u.shape[-2]
    shift = n_pe // R
    o_std = (offset - n_pe // 2) % R
    acc = np.zeros_like(u)
    for p in range(R):
        acc += np.exp(-2j * np.pi * p * o_std / R) * np.roll(u, -p * shift, axis=-2)
    return acc / R


def _row_subset_contribution(u, rows):
    ksp = fft2c(u)
    keep = np.zeros_like(ksp)
    keep[..., rows, :] = ksp[..., rows, :]
    return ifft2c(keep)


@dataclass(frozen=True)
class GhostDecomposition:
    """Exact composite split: mean moving content + ghost + background, per coil."""

    mean_moving: np.ndarray
    ghost: np.ndarray
    background: np.ndarray

    @property
    def composite(self):
        return self.mean_moving + self.ghost + self.background


def decompose_oracle(truth, sched, sens, t0):
    """Exact-math composite decomposition from phantom truth.

    Lattice-sampled frames use the shift/modulation route; a frame whose
    assigned rows are not a full lattice (retro-retained center lines, or
    lines stolen by a nearer frame) falls back to the masked-FFT route, which
    is exact as well. Noise never enters: this consumes the noiseless truth.
    """
    if sens.shape[1:] != truth.dims or sched.n_pe != truth.dims[0]:
        raise ValueError("truth, schedule, and coil maps disagree on dimensions")
    assignment = assign_window_lines(sched, t0)
    n_coils = sens.shape[0]
    n_pe, n_fe = truth.dims
    mean_moving = np.zeros((n_coils, n_pe, n_fe), dtype=np.complex128)
    ghost = np.zeros_like(mean_moving)
    background = np.zeros_like(mean_moving)
    R = sched.R
    for t in window_for(t0, R, sched.T):
        moving_c = sens * truth.moving[t][None]
        stationary_c = sens * truth.stationary_at(t)[None]
        mean_moving += moving_c / R
        rows = assignment.get(t)
        if rows is None:
            continue
        offset = sched.frame_offset(t)
        lattice = np.arange(offset, n_pe, R)
        if n_pe % R == 0 and rows.size == lattice.size and np.array_equal(rows, lattice):
            contrib_m = _lattice_contribution(moving_c, offset, R)
            contrib_s = _lattice_contribution(stationary_c, offset, R)
        else:
            contrib_m = _row_subset_contribution(moving_c, rows)
            contrib_s = _row_subset_contribution(stationary_c, rows)
        ghost += contrib_m
        background += contrib_s
    ghost -= mean_moving
    return GhostDecomposition(mean_moving=mean_moving, ghost=ghost, background=background)


def ghost_reference(ksp, t0, R_target=8):
    """Measured-data ghost labels: high-rate composite minus TGRAPPA baseline.

    Retrospectively re-undersamples the series to R_target, forms the
    composite there, and subtracts the TGRAPPA reconstruction of the original
    (lower-rate) series, per coil. The result contains the composite's ghost
    plus residual reconstruction error, which is what a practical training
    label looks like.
    """
    from .classical import tgrappa_coil_images
    from .sampling import retro_undersample

    retro = ksp.subset(retro_undersample(ksp.schedule, R_target))
    comp_hi = form_composite(retro, t0)
    baseline = tgrappa_coil_images(ksp, t0)
    return comp_hi - baseline, comp_hi
