"""Dataset assembly and inference glue for the ghost-separating network.

The network sees four adjacent composite images of one coil (interleaved
real/imaginary channels) and predicts the ghost component of all four; only
the center-of-interest slice is used downstream. Labels come either from
the exact simulation oracle or from the measurement-only reference path
(high-R composite minus TGRAPPA at the acquired R).
"""

import numpy as np

from . import nn
from .composite import (
    combine_coils,
    decompose_oracle,
    form_composite,
    ghost_reference,
    window_for,
)

__all__ = [
    "stack_window",
    "build_ghost_dataset",
    "estimate_ghost",
    "estimate_background",
    "oracle_background",
    "naive_background",
    "combined_background",
]


def stack_window(ksp, t0, n_frames=4):
    """Composite stacks around t0: returns (stacks (C, n_frames, H, W), idx).

    idx is the position of t0 inside the clamped window {t0-2, ..., t0+1}.
    """
    if ksp.n_frames < n_frames:
        raise ValueError("series shorter than the stack window")
    window = window_for(t0, n_frames, ksp.n_frames)
    comps = [form_composite(ksp, tau) for tau in window]
    stacks = np.stack(comps, axis=1)
    return stacks, t0 - window.start


def build_ghost_dataset(ksp, t0_list, source="oracle", parent=None):
    """Training pairs for every (t0, coil): 4-frame input and label stacks.

    Inputs are composite stacks of `ksp` (e.g. the retrospectively
    undersampled high-R series). source "oracle" labels them with the exact
    decomposition of the attached phantom truth (noiseless ghosts even when
    inputs are noisy); source "tgrappa" labels them measurement-only as
    composite(ksp) - TGRAPPA(parent), where `parent` is the lower-R series
    `ksp` was subset from. Returns (samples, keys) with samples[i] =
    (stack, label) and keys[i] = (t0, coil).
    """
    if source not in ("oracle", "tgrappa"):
        raise ValueError(f"unknown label source: {source!r}")
    if source == "oracle" and ksp.truth is None:
        raise ValueError("oracle labels need a KSpaceSeries with attached truth")
    if source == "tgrappa" and parent is None:
        raise ValueError("tgrappa labels need the parent (lower-R) series")
    n_frames = 4
    label_cache = {}

    def labels_at(tau):
        if tau not in label_cache:
            if source == "oracle":
                label_cache[tau] = decompose_oracle(
                    ksp.truth, ksp.schedule, ksp.sens, tau
                ).ghost
            else:
                label_cache[tau] = ghost_reference(
                    parent, tau, R_target=ksp.schedule.R
                )[0]
        return label_cache[tau]

    samples, keys = [], []
    for t0 in t0_list:
        stacks, _ = stack_window(ksp, t0, n_frames)
        window = window_for(t0, n_frames, ksp.n_frames)
        label = np.stack([labels_at(tau) for tau in window], axis=1)
        for c in range(ksp.n_coils):
            samples.append((stacks[c], label[c]))
            keys.append((t0, c))
    return samples, keys


def estimate_ghost(net, ksp, t0):
    """Net-estimated ghost coil images of frame t0: (C, H, W)."""
    stacks, idx = stack_window(ksp, t0)
    return np.stack([nn.apply_ghost_net(net, stacks[c])[idx] for c in range(ksp.n_coils)])


def estimate_background(net, ksp, t0):
    """Ghost-corrected background coil images: composite minus net ghost.

    The temporally averaged moving component stays in this estimate; the
    OVR mask removes it before any k-space subtraction.
    """
    stacks, idx = stack_window(ksp, t0)
    comp = stacks[:, idx]
    return comp - estimate_ghost(net, ksp, t0)


def oracle_background(ksp, t0):
    """Exact ghost-corrected background (mean moving + stationary), per coil."""
    if ksp.truth is None:
        raise ValueError("oracle background needs attached truth")
    dec = decompose_oracle(ksp.truth, ksp.schedule, ksp.sens, t0)
    return dec.mean_moving + dec.background


def naive_background(ksp, t0):
    """Uncorrected background estimate: the raw composite (ghost kept in)."""
    return form_composite(ksp, t0)


def combined_background(background_coils, sens):
    """Coil-combined background image for final composition."""
    return combine_coils(background_coils, sens)
