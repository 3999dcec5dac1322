from __future__ import annotations

import numpy as np
import pytest

from psikit.beamform import BeamformedStack
from psikit.iqfilter import FilteredIQStack
from psikit.models import (
    AcquisitionConfig,
    ArrayGeometry,
    BeamformConfig,
    BeamGrid,
    Phantom,
    PointScatterer,
    Preset,
    PulseSpec,
    Region,
)

C = 1540.0
FC = 5e6
FS = 20e6
LAMBDA = C / FC
PRF = 3000.0
ANGLES = (-0.05, 0.0, 0.05)
# compounded frame rate prf / len(ANGLES)
FRAME_RATE = PRF / len(ANGLES)


def make_acq(**update) -> AcquisitionConfig:
    base = dict(
        geometry=ArrayGeometry(element_count=16, pitch=LAMBDA / 2),
        pulse=PulseSpec(center_freq=FC, n_cycles=1.5),
        speed_of_sound=C,
        sampling_freq=FS,
        prf=PRF,
        steering_angles=ANGLES,
        n_frames=8,
        n_samples=256,
    )
    base.update(update)
    return AcquisitionConfig(**base)


def make_grid(nz: int = 32, nx: int = 17, z0: float = 20 * LAMBDA) -> BeamGrid:
    dx = LAMBDA / 4
    return BeamGrid(x0=-(nx - 1) * dx / 2, z0=z0, dx=dx, dz=C / (4 * FS), nx=nx, nz=nz)


def make_filtered(iq: np.ndarray, acq: AcquisitionConfig, grid: BeamGrid) -> FilteredIQStack:
    k = min(iq.shape[2] * iq.shape[3], iq.shape[1])
    return FilteredIQStack(iq=iq, grid=grid, config=acq, beamform_config=BeamformConfig(), decim=1,
                           demod_freq=acq.pulse.center_freq, lo=0, hi=k)


def moving_point(grid: BeamGrid, vz: float, n_frames: int = 8, seed: int = 3) -> Phantom:
    """One point at x = 0 whose track is centered on the middle of the grid."""
    travel = vz * (n_frames - 1) / FRAME_RATE
    z_mid = grid.z0 + grid.dz * (grid.nz - 1) / 2
    return Phantom(points=[PointScatterer(x=0.0, z=z_mid - travel / 2, vz=vz)],
                   region=Region.from_grid(grid), seed=seed)


@pytest.fixture
def acq() -> AcquisitionConfig:
    return make_acq()


@pytest.fixture
def grid() -> BeamGrid:
    return make_grid()


@pytest.fixture
def tiny_preset(acq: AcquisitionConfig, grid: BeamGrid) -> Preset:
    return Preset(name="tiny", acquisition=acq, grid=grid, decimation=4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def random_filtered(acq: AcquisitionConfig, rng: np.random.Generator):
    g = make_grid(nz=6, nx=5)
    shape = (4, acq.n_frames, g.nz, g.nx)
    iq = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return make_filtered(iq, acq, g)


@pytest.fixture
def random_beamformed(acq: AcquisitionConfig, grid: BeamGrid, rng: np.random.Generator) -> BeamformedStack:
    rf = rng.standard_normal((4, acq.n_frames, grid.nz, grid.nx))
    return BeamformedStack(rf=rf, grid=grid, config=acq, beamform_config=BeamformConfig())
