"""Multicoil encoding operator for line-undersampled Cartesian imaging.

apply_E maps an image to the sampled k-space rows of every coil; apply_EH is
its exact adjoint (zero-filled inverse FFT followed by coil combination with
conjugate maps). Sampled k-space is stored compactly as (coils, n_lines,
n_fe) per frame, with the line indices carried by the schedule.
"""

from dataclasses import dataclass, field

import numpy as np

from .fourier import fft2c, ifft2c
from .validation import as_complex_image, as_coil_images, check_lines

__all__ = ["apply_E", "apply_EH", "KSpaceSeries"]


def apply_E(x, sens, lines):
    """Encode image x -> sampled k-space rows, shape (coils, len(lines), n_fe)."""
    x = as_complex_image(x, "image")
    sens = as_coil_images(sens, "coil maps")
    if sens.shape[1:] != x.shape:
        raise ValueError(f"coil maps {sens.shape[1:]} do not match image {x.shape}")
    lines = check_lines(lines, x.shape[0])
    return fft2c(sens * x[None])[:, lines, :]


def apply_EH(y, sens, lines):
    """Adjoint of apply_E: zero-fill, inverse FFT, conjugate-map combine."""
    y = as_coil_images(y, "sampled k-space")
    sens = as_coil_images(sens, "coil maps")
    n_coils, n_pe, n_fe = sens.shape
    lines = check_lines(lines, n_pe)
    if y.shape != (n_coils, lines.size, n_fe):
        raise ValueError(f"k-space shape {y.shape} != expected {(n_coils, lines.size, n_fe)}")
    full = np.zeros((n_coils, n_pe, n_fe), dtype=np.complex128)
    full[:, lines, :] = y
    return np.sum(np.conj(sens) * ifft2c(full), axis=0)


@dataclass(frozen=True)
class KSpaceSeries:
    """Sampled multicoil k-space for every frame of a schedule.

    data[t] has shape (coils, len(schedule.lines[t]), n_fe). noise_sigma
    records the simulated noise level (0 for exact-math data) so oracle
    stages can refuse noisy input.
    """

    data: tuple
    schedule: object
    sens: np.ndarray
    noise_sigma: float = 0.0
    truth: object = field(default=None, repr=False)

    @property
    def n_frames(self):
        return self.schedule.T

    @property
    def n_coils(self):
        return self.sens.shape[0]

    @property
    def dims(self):
        return self.sens.shape[1:]

    def frame(self, t):
        return self.data[t]

    def zero_filled_kspace(self, t):
        """Frame t k-space embedded on the full (coils, n_pe, n_fe) grid."""
        n_coils, (n_pe, n_fe) = self.n_coils, self.dims
        full = np.zeros((n_coils, n_pe, n_fe), dtype=np.complex128)
        full[:, self.schedule.frame_lines(t), :] = self.data[t]
        return full

    def subset(self, new_schedule):
        """Restrict stored rows to a schedule whose lines are subsets of ours."""
        new_data = []
        for t in range(self.schedule.T):
            old = self.schedule.frame_lines(t)
            new = new_schedule.frame_lines(t)
            pos = np.searchsorted(old, new)
            if np.any(pos >= old.size) or np.any(old[np.minimum(pos, old.size - 1)] != new):
                raise ValueError(f"frame {t}: new lines are not a subset of acquired lines")
            new_data.append(np.ascontiguousarray(self.data[t][:, pos, :]))
        return KSpaceSeries(
            data=tuple(new_data),
            schedule=new_schedule,
            sens=self.sens,
            noise_sigma=self.noise_sigma,
            truth=self.truth,
        )
