"""Built-in acquisition presets.

Four full-size presets reproduce the published acquisition setups. Each has a
``<name>_desk`` twin with 64 elements, a short depth window around 30-40
wavelengths, a small pixel grid and 16 frames, for quick runs and tests.

The beamforming grid samples depth at c/(4 fs); with decimation 4 the IQ
grid lands on the published axial voxel (12.32 um at 125 MHz, 24.64 um at
62.5 MHz) without folding the 2 f_c mixing image into the passband.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Dict, List, Tuple

from .errors import UnknownPresetError
from .models import (
    AcquisitionConfig,
    ArrayGeometry,
    BeamformConfig,
    BeamGrid,
    Preset,
    PulseSpec,
)

SPEED_OF_SOUND = 1540.0
DESK_ELEMENTS = 64
# under 20 frames the default 10% rejection removes exactly one leading component
DESK_FRAMES = 16
DESK_DECIMATION = 4


def angle_fan(start_deg: float, stop_deg: float, step_deg: float) -> Tuple[float, ...]:
    """Inclusive fan of steering angles in radians."""
    n = int(round((stop_deg - start_deg) / step_deg)) + 1
    return tuple(math.radians(start_deg + i * step_deg) for i in range(n))


def _grid(x_min: float, x_max: float, z_min: float, z_max: float, dx: float, dz: float) -> BeamGrid:
    nx = int(math.floor((x_max - x_min) / dx)) + 1
    nz = int(math.floor((z_max - z_min) / dz)) + 1
    # center the lateral extent on the array axis
    x0 = -(nx - 1) * dx / 2.0 if x_min == -x_max else x_min
    return BeamGrid(x0=x0, z0=z_min, dx=dx, dz=dz, nx=nx, nz=nz)


def _desk_samples(acq: AcquisitionConfig, z_max: float, x_max: float) -> int:
    # transmit + f-number-limited receive path + pulse length, with margin
    t = (z_max * (1.0 + math.sqrt(1.25)) + 2.0 * x_max) / acq.speed_of_sound + acq.pulse.duration
    n = int(math.ceil(t * acq.sampling_freq)) + 16
    return -(-n // 32) * 32


def _desk(full: Preset, lateral_dx: float) -> Preset:
    acq = full.acquisition
    lam = acq.wavelength
    x_half, z_min, z_max = 6.0 * lam, 30.0 * lam, 40.0 * lam
    dz = acq.speed_of_sound / (4.0 * acq.sampling_freq)
    grid = _grid(-x_half, x_half, z_min, z_max, lateral_dx, dz)
    desk_acq = acq.model_copy(update={
        "geometry": ArrayGeometry(element_count=DESK_ELEMENTS, pitch=acq.geometry.pitch),
        "n_frames": DESK_FRAMES,
        "n_sets": 1,
    })
    desk_acq = desk_acq.model_copy(update={"n_samples": _desk_samples(desk_acq, grid.z_max, x_half)})
    notes = list(full.notes) + [
        f"desk variant of {full.name}: {DESK_ELEMENTS} elements, {DESK_FRAMES} frames, "
        f"depth {z_min * 1e3:.3f}-{z_max * 1e3:.3f} mm"
    ]
    return Preset(name=f"{full.name}_desk", acquisition=AcquisitionConfig.model_validate(desk_acq.model_dump()),
                  grid=grid, beamform=full.beamform, decimation=DESK_DECIMATION, notes=notes)


def _mouse50() -> Preset:
    fs = 125e6
    acq = AcquisitionConfig(
        geometry=ArrayGeometry(element_count=224, pitch=8.2e-3 / 224),
        pulse=PulseSpec(center_freq=50e6, n_cycles=1.5),
        speed_of_sound=SPEED_OF_SOUND,
        sampling_freq=fs,
        prf=14250.0,
        steering_angles=angle_fan(-9, 9, 1),
        n_frames=7500,
        n_sets=5,
        n_samples=768,
        quantization_bits=16,
        printed_frame_rate=750.0,
    )
    grid = _grid(-4.1e-3, 4.1e-3, 0.5e-3, 4.5e-3, 4.5e-6, SPEED_OF_SOUND / (4 * fs))
    return Preset(name="mouse50", acquisition=acq, grid=grid, decimation=4,
                  notes=["5 sets of 1500 compounded frames, accumulated per set"])


def _mouse40() -> Preset:
    fs = 125e6
    acq = AcquisitionConfig(
        geometry=ArrayGeometry(element_count=160, pitch=8.4e-3 / 160),
        pulse=PulseSpec(center_freq=41.67e6, n_cycles=1.5),
        speed_of_sound=SPEED_OF_SOUND,
        sampling_freq=fs,
        prf=12000.0,
        steering_angles=angle_fan(-7, 7, 1),
        n_frames=4000,
        n_samples=1024,
        quantization_bits=16,
        printed_frame_rate=800.0,
    )
    grid = _grid(-4.2e-3, 4.2e-3, 0.5e-3, 6.0e-3, 6.6e-6, SPEED_OF_SOUND / (4 * fs))
    return Preset(name="mouse40", acquisition=acq, grid=grid, decimation=4,
                  notes=["no published lateral voxel for this probe; 6.6 um borrowed from mouse30"])


def _mouse30() -> Preset:
    fs = 125e6
    acq = AcquisitionConfig(
        geometry=ArrayGeometry(element_count=128, pitch=6.8e-3 / 128),
        pulse=PulseSpec(center_freq=31.25e6, n_cycles=1.5),
        speed_of_sound=SPEED_OF_SOUND,
        sampling_freq=fs,
        prf=14400.0,
        steering_angles=angle_fan(-18, 18, 4.5),
        n_frames=1920,
        n_samples=1280,
        quantization_bits=14,
        printed_frame_rate=800.0,
    )
    grid = _grid(-3.4e-3, 3.4e-3, 0.5e-3, 7.5e-3, 6.6e-6, SPEED_OF_SOUND / (4 * fs))
    return Preset(name="mouse30", acquisition=acq, grid=grid, decimation=4,
                  notes=["printed compounded rate 800 Hz disagrees with 14400/9 = 1600 Hz; 1600 Hz is used"])


def _rabbit20() -> Preset:
    fs = 62.5e6
    acq = AcquisitionConfig(
        geometry=ArrayGeometry(element_count=256, pitch=32e-3 / 256),
        # one 10.83 MHz cycle spans two cycles of the 21.66 MHz receive band
        pulse=PulseSpec(center_freq=21.66e6, n_cycles=2.0),
        speed_of_sound=SPEED_OF_SOUND,
        sampling_freq=fs,
        prf=33333.0,
        steering_angles=angle_fan(-4, 4, 1),
        n_frames=300,
        n_samples=1664,
        quantization_bits=14,
        demod_freq=21.66e6,
        transmit_freq=10.83e6,
        printed_frame_rate=1852.0,
    )
    grid = _grid(-16e-3, 16e-3, 1.0e-3, 20.0e-3, 7.8125e-6, SPEED_OF_SOUND / (4 * fs))
    return Preset(name="rabbit20", acquisition=acq, grid=grid, decimation=4,
                  notes=["pulse inversion modeled as a linear acquisition at the receive frequency",
                         "printed 1852 Hz counts both inversion pulses (33333/18); prf/9 is used"])


@lru_cache(maxsize=1)
def _registry() -> Dict[str, Preset]:
    out: Dict[str, Preset] = {}
    desk_dx = {"mouse50": 4.5e-6, "mouse40": 6.6e-6, "mouse30": 6.6e-6, "rabbit20": 7.8125e-6}
    for build in (_mouse50, _mouse40, _mouse30, _rabbit20):
        full = build()
        out[full.name] = full
        desk = _desk(full, desk_dx[full.name])
        out[desk.name] = desk
    return out


def builtin_presets() -> Dict[str, Tuple[AcquisitionConfig, BeamGrid, BeamformConfig]]:
    """Map of preset name to (acquisition, grid, beamform config)."""
    return {name: p.as_triple() for name, p in _registry().items()}


def preset_names() -> List[str]:
    return sorted(_registry())


def get_preset(name: str) -> Preset:
    try:
        return _registry()[name]
    except KeyError:
        raise UnknownPresetError(f"unknown preset '{name}' (known: {', '.join(preset_names())})") from None
