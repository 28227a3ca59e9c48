"""Shared fixtures: one desk-scale phantom world reused across test files."""

import numpy as np
import pytest

from ovrcine.phantom import (
    PhantomConfig,
    make_coil_maps,
    make_phantom,
    noise_sigma_for_snr,
    simulate_acquisition,
)
from ovrcine.sampling import make_schedule, retro_undersample


@pytest.fixture(scope="session")
def desk():
    """Noiseless desk-scale world: 64x64, T=48, C=6, R=4 base schedule."""
    pc = PhantomConfig()
    truth = make_phantom(pc)
    sens = make_coil_maps(6, pc.dims)
    sched4 = make_schedule(64, 4, 48)
    ksp4 = simulate_acquisition(truth, sens, sched4)
    return {"config": pc, "truth": truth, "sens": sens, "sched4": sched4, "ksp4": ksp4}


@pytest.fixture(scope="session")
def desk8(desk):
    """Retrospective R=8 subset of the desk world."""
    sched8 = retro_undersample(desk["sched4"], 8)
    return {"sched8": sched8, "ksp8": desk["ksp4"].subset(sched8)}


@pytest.fixture(scope="session")
def desk_noisy(desk):
    """Same world at ~30 dB SNR."""
    sigma = noise_sigma_for_snr(desk["truth"], desk["sens"], desk["sched4"], 30.0)
    ksp4 = simulate_acquisition(
        desk["truth"], desk["sens"], desk["sched4"], noise_sigma=sigma, seed=0
    )
    sched8 = retro_undersample(desk["sched4"], 8)
    return {"sigma": sigma, "ksp4": ksp4, "ksp8": ksp4.subset(sched8)}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
