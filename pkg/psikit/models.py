"""Pydantic models for the toolkit.

Acquisition, geometry, phantom and reconstruction settings plus the run
manifest and metrics report. All models are frozen: they are shared across
worker threads without copying. Array containers live next to the code
that produces them (phantom.py, beamform.py, iqfilter.py, phasemap.py).
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

_FROZEN = ConfigDict(frozen=True, extra="forbid")


class ArrayGeometry(BaseModel):
    """Linear array, element centers on x, centered on 0."""

    model_config = _FROZEN

    element_count: int = Field(ge=1)
    pitch: float = Field(gt=0.0)

    @property
    def element_x(self) -> np.ndarray:
        i = np.arange(self.element_count, dtype=np.float64)
        return (i - (self.element_count - 1) / 2.0) * self.pitch

    @property
    def width(self) -> float:
        return self.element_count * self.pitch


class PulseSpec(BaseModel):
    model_config = _FROZEN

    center_freq: float = Field(gt=0.0)
    n_cycles: float = Field(default=1.5, gt=0.0)
    envelope: Literal["hann", "rect"] = "hann"

    @property
    def duration(self) -> float:
        return self.n_cycles / self.center_freq


class AcquisitionConfig(BaseModel):
    """Probe, pulse, angle fan and timing of one plane-wave acquisition."""

    model_config = _FROZEN

    geometry: ArrayGeometry
    pulse: PulseSpec
    speed_of_sound: float = Field(default=1540.0, gt=0.0)
    sampling_freq: float = Field(gt=0.0)
    prf: float = Field(gt=0.0)
    # radians; degrees only at the CLI boundary
    steering_angles: Tuple[float, ...] = Field(min_length=1)
    n_frames: int = Field(ge=1)
    n_samples: int = Field(ge=1)
    quantization_bits: Optional[int] = Field(default=None, ge=2, le=24)
    n_sets: int = Field(default=1, ge=1)
    demod_freq: Optional[float] = Field(default=None, gt=0.0)
    transmit_freq: Optional[float] = Field(default=None, gt=0.0)
    # rate as printed in the acquisition description, kept for traceability
    printed_frame_rate: Optional[float] = Field(default=None, gt=0.0)

    @field_validator("steering_angles")
    @classmethod
    def _finite_angles(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not all(math.isfinite(a) and abs(a) < math.pi / 2 for a in v):
            raise ValueError("steering angles must be finite and within (-pi/2, pi/2)")
        return v

    @model_validator(mode="after")
    def _sets_divide_frames(self) -> "AcquisitionConfig":
        if self.n_frames % self.n_sets != 0:
            raise ValueError("n_frames must be a multiple of n_sets")
        return self

    @property
    def n_angles(self) -> int:
        return len(self.steering_angles)

    @property
    def frame_rate(self) -> Fraction:
        """Compounded frame rate prf / n_angles, as an exact rational."""
        return Fraction(self.prf) / self.n_angles

    @property
    def frame_rate_mismatch(self) -> bool:
        if self.printed_frame_rate is None:
            return False
        return abs(float(self.frame_rate) - self.printed_frame_rate) > 1.0

    @property
    def wavelength(self) -> float:
        return self.speed_of_sound / self.pulse.center_freq

    @property
    def effective_demod_freq(self) -> float:
        return self.demod_freq if self.demod_freq is not None else self.pulse.center_freq

    @property
    def max_depth(self) -> float:
        """Deepest on-axis depth whose two-way echo fits in n_samples."""
        return self.n_samples / self.sampling_freq * self.speed_of_sound / 2.0

    @property
    def frames_per_set(self) -> int:
        return self.n_frames // self.n_sets

    def event_time(self, frame: int, angle: int) -> float:
        return (frame * self.n_angles + angle) / self.prf


class BeamGrid(BaseModel):
    """Pixel grid; (x0, z0) is the top-left pixel center."""

    model_config = _FROZEN

    x0: float
    z0: float = Field(gt=0.0)
    dx: float = Field(gt=0.0)
    dz: float = Field(gt=0.0)
    nx: int = Field(ge=1)
    nz: int = Field(ge=1)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx, dtype=np.float64)

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.nz, dtype=np.float64)

    @property
    def z_max(self) -> float:
        return self.z0 + self.dz * (self.nz - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nz, self.nx)

    def decimated(self, decim: int) -> "BeamGrid":
        return BeamGrid(x0=self.x0, z0=self.z0, dx=self.dx, dz=self.dz * decim,
                        nx=self.nx, nz=-(-self.nz // decim))

    def index_of(self, x: float, z: float) -> Tuple[int, int]:
        """Nearest (iz, ix) pixel of a point."""
        return int(round((z - self.z0) / self.dz)), int(round((x - self.x0) / self.dx))


class BeamformConfig(BaseModel):
    model_config = _FROZEN

    f_number: float = Field(default=1.0, gt=0.0)
    dc_offset: float = Field(default=0.32, gt=0.0, lt=1.0)
    interpolation: Literal["nearest", "linear"] = "linear"
    # zero-mean window shape; see beamform.ZERO_MEAN_WINDOWS
    apodization: Literal["square"] = "square"


class Region(BaseModel):
    """Axis-aligned box (meters) holding the tissue scatterers."""

    model_config = _FROZEN

    x_min: float
    x_max: float
    z_min: float = Field(gt=0.0)
    z_max: float

    @model_validator(mode="after")
    def _ordered(self) -> "Region":
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise ValueError("region bounds must be ordered")
        return self

    @classmethod
    def from_grid(cls, grid: BeamGrid) -> "Region":
        return cls(x_min=grid.x0 - grid.dx / 2, x_max=grid.x0 + grid.dx * (grid.nx - 0.5),
                   z_min=grid.z0 - grid.dz / 2 if grid.z0 > grid.dz / 2 else grid.z0,
                   z_max=grid.z0 + grid.dz * (grid.nz - 0.5))


class PointScatterer(BaseModel):
    """Isolated scatterer with constant velocity (calibration phantoms)."""

    model_config = _FROZEN

    x: float
    z: float
    amplitude: float = 1.0
    vx: float = 0.0
    vz: float = 0.0


class Vessel(BaseModel):
    """Straight in-plane vessel segment p0 -> p1 with parabolic flow."""

    model_config = _FROZEN

    p0: Tuple[float, float]
    p1: Tuple[float, float]
    radius: float = Field(gt=0.0)
    # signed along p0 -> p1
    peak_velocity: float
    # scatterers per mm^2 of in-plane vessel area
    scatterer_density: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _distinct_ends(self) -> "Vessel":
        if self.p0 == self.p1:
            raise ValueError("vessel endpoints must differ")
        return self

    @property
    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    @property
    def axis(self) -> np.ndarray:
        d = np.array([self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]], dtype=np.float64)
        return d / np.linalg.norm(d)


class Phantom(BaseModel):
    model_config = _FROZEN

    vessels: List[Vessel] = Field(default_factory=list)
    tissue_scatterer_count: int = Field(default=0, ge=0)
    tissue_amplitude: float = 1.0
    blood_amplitude: float = 1.0
    region: Region
    seed: int = Field(default=0, ge=0, lt=2**64)
    points: List[PointScatterer] = Field(default_factory=list)
    # per-channel SNR in dB against the RMS of the noiseless dataset; None = no noise
    noise_snr_db: Optional[float] = None


class Preset(BaseModel):
    """Named acquisition + reconstruction setup."""

    model_config = _FROZEN

    name: str
    acquisition: AcquisitionConfig
    grid: BeamGrid
    beamform: BeamformConfig = Field(default_factory=BeamformConfig)
    decimation: int = Field(default=1, ge=1)
    notes: List[str] = Field(default_factory=list)

    def as_triple(self) -> Tuple[AcquisitionConfig, BeamGrid, BeamformConfig]:
        return self.acquisition, self.grid, self.beamform


class RunManifest(BaseModel):
    """Reproducibility record written next to every stage output."""

    model_config = ConfigDict(frozen=True)

    stage: str
    software_version: str
    preset: Optional[str] = None
    seed: Optional[int] = None
    phantom: Optional[Dict[str, Any]] = None
    configs: Dict[str, Any] = Field(default_factory=dict)
    settings: Dict[str, Any] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    extra: Dict[str, Any] = Field(default_factory=dict)


class MetricsReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    radii: List[float]
    skipped: int = 0
    cfi_radii: List[float] = Field(default_factory=list)
    cfi_skipped: int = 0
    histogram_edges: List[float]
    histogram_counts: List[int]
    cfi_histogram_counts: List[int] = Field(default_factory=list)
    coverage_ratio: float
    cutoff_amplitude: float
    cutoff_reached: bool = True
    threshold_db: float = -6.0
    wavelength: float
