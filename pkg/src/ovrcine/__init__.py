"""Outer-volume removal and self-supervised reconstruction for dynamic MRI.

Simulates multi-coil cine phantoms under time-interleaved shifted uniform
undersampling, characterizes the pseudo-periodic ghosting of composite
images, removes the outer volume in k-space, and reconstructs with
classical (CG-SENSE, TGRAPPA) and self-supervised unrolled methods.
"""

__version__ = "0.1.0"

from .composite import GhostDecomposition, decompose_oracle, form_composite
from .encoding import KSpaceSeries, apply_E, apply_EH
from .fourier import fft2c, ifft2c
from .metrics import psnr, ssim
from .ovr import OvrMask, make_ovr_mask, subtract_outer_volume
from .phantom import (
    PhantomConfig,
    PhantomTruth,
    make_coil_maps,
    make_phantom,
    simulate_acquisition,
)
from .sampling import SamplingSchedule, make_schedule, retro_undersample

__all__ = [
    "__version__",
    "GhostDecomposition",
    "decompose_oracle",
    "form_composite",
    "KSpaceSeries",
    "apply_E",
    "apply_EH",
    "fft2c",
    "ifft2c",
    "psnr",
    "ssim",
    "OvrMask",
    "make_ovr_mask",
    "subtract_outer_volume",
    "PhantomConfig",
    "PhantomTruth",
    "make_coil_maps",
    "make_phantom",
    "simulate_acquisition",
    "SamplingSchedule",
    "make_schedule",
    "retro_undersample",
]
