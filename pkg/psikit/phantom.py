"""Flow phantom and plane-wave channel-data simulator.

Blood scatterers sit inside straight vessels and move along the vessel axis
with a parabolic profile, wrapping from the p1 end back to p0. Tissue
scatterers are static. Point scatterers move linearly (calibration targets).

Random draws use counter-style seeds so every scatterer population is fixed
by (phantom.seed, stream, index) alone:

- tissue:   default_rng([seed, 0])
- vessel i: default_rng([seed, 1, i])
- noise for event (frame, angle): default_rng([seed, 2, frame, angle])
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import DimensionMismatchError, InputValidationError, PreconditionError
from .geometry import round_trip_delay
from .logging_utils import elapsed_ms, log_info, log_warning
from .models import AcquisitionConfig, BeamGrid, Phantom, PointScatterer, PulseSpec, Region, Vessel
from .tooling import run_parallel

_STREAM_TISSUE = 0
_STREAM_VESSEL = 1
_STREAM_NOISE = 2
# scatterers per echo batch; bounds the [S, E, W] scratch arrays
_BATCH = 512


@dataclass(frozen=True)
class ChannelData:
    """Raw element signals [frame][angle][element][sample]."""

    samples: np.ndarray
    config: AcquisitionConfig

    def __post_init__(self) -> None:
        cfg = self.config
        want = (cfg.n_frames, cfg.n_angles, cfg.geometry.element_count, cfg.n_samples)
        if self.samples.shape != want:
            raise DimensionMismatchError(f"channel samples {self.samples.shape} do not match config {want}")

    @property
    def quantized(self) -> bool:
        return self.config.quantization_bits is not None


@dataclass(frozen=True)
class Scatterers:
    """Scatterer snapshot at one instant; parallel arrays of length S."""

    x: np.ndarray
    z: np.ndarray
    amplitude: np.ndarray
    vx: np.ndarray
    vz: np.ndarray

    def __len__(self) -> int:
        return int(self.x.shape[0])


def flow_speed(vessel: Vessel, r: np.ndarray | float) -> np.ndarray:
    """Parabolic profile v(r) = peak * (1 - (r / radius)^2), r = distance from the centerline."""
    r = np.asarray(r, dtype=np.float64)
    return vessel.peak_velocity * (1.0 - (r / vessel.radius) ** 2)


@dataclass(frozen=True)
class _VesselPopulation:
    vessel: Vessel
    s0: np.ndarray
    offset: np.ndarray
    amplitude: np.ndarray


class ScattererField:
    """Initial draws of a phantom; `at(t)` evaluates positions at time t."""

    def __init__(self, phantom: Phantom) -> None:
        self.phantom = phantom
        reg = phantom.region
        rng = np.random.default_rng([phantom.seed, _STREAM_TISSUE])
        n = phantom.tissue_scatterer_count
        self._tissue_x = rng.uniform(reg.x_min, reg.x_max, n)
        self._tissue_z = rng.uniform(reg.z_min, reg.z_max, n)
        self._tissue_a = phantom.tissue_amplitude * rng.standard_normal(n)

        self._vessels: List[_VesselPopulation] = []
        for i, v in enumerate(phantom.vessels):
            vr = np.random.default_rng([phantom.seed, _STREAM_VESSEL, i])
            area_mm2 = 2.0 * v.radius * v.length * 1e6
            count = max(1, int(round(v.scatterer_density * area_mm2)))
            self._vessels.append(_VesselPopulation(
                vessel=v,
                s0=vr.uniform(0.0, v.length, count),
                offset=vr.uniform(-v.radius, v.radius, count),
                amplitude=phantom.blood_amplitude * vr.standard_normal(count),
            ))

        pts = phantom.points
        self._pts = np.array([[p.x, p.z, p.amplitude, p.vx, p.vz] for p in pts], dtype=np.float64).reshape(-1, 5)

    def __len__(self) -> int:
        return len(self._tissue_x) + sum(len(p.s0) for p in self._vessels) + len(self._pts)

    def at(self, t: float) -> Scatterers:
        if t < 0:
            raise PreconditionError("scatterer time must be >= 0")
        xs, zs, amps, vxs, vzs = [self._tissue_x], [self._tissue_z], [self._tissue_a], [], []
        vxs.append(np.zeros_like(self._tissue_x))
        vzs.append(np.zeros_like(self._tissue_x))
        for pop in self._vessels:
            v = pop.vessel
            axis = v.axis
            normal = np.array([-axis[1], axis[0]])
            speed = flow_speed(v, pop.offset)
            s = np.mod(pop.s0 + speed * t, v.length)
            xs.append(v.p0[0] + s * axis[0] + pop.offset * normal[0])
            zs.append(v.p0[1] + s * axis[1] + pop.offset * normal[1])
            amps.append(pop.amplitude)
            vxs.append(speed * axis[0])
            vzs.append(speed * axis[1])
        p = self._pts
        xs.append(p[:, 0] + p[:, 3] * t)
        zs.append(p[:, 1] + p[:, 4] * t)
        amps.append(p[:, 2])
        vxs.append(p[:, 3])
        vzs.append(p[:, 4])
        return Scatterers(x=np.concatenate(xs), z=np.concatenate(zs), amplitude=np.concatenate(amps),
                          vx=np.concatenate(vxs), vz=np.concatenate(vzs))


def scatterer_positions(phantom: Phantom, t: float) -> Scatterers:
    """All scatterers of `phantom` at time t (tissue, then vessels in order, then points)."""
    return ScattererField(phantom).at(t)


def pulse_waveform(t: np.ndarray, pulse: PulseSpec) -> np.ndarray:
    """Enveloped tone centered on t = 0, zero outside |t| <= duration / 2."""
    half = pulse.duration / 2.0
    inside = np.abs(t) <= half
    if pulse.envelope == "hann":
        env = 0.5 * (1.0 + np.cos(np.pi * t / half))
    else:
        env = np.ones_like(t)
    return np.where(inside, env * np.cos(2.0 * np.pi * pulse.center_freq * t), 0.0)


def _echo(sc: Scatterers, theta: float, config: AcquisitionConfig) -> np.ndarray:
    """Received traces [E, ns] of one transmit event."""
    c = config.speed_of_sound
    fs = config.sampling_freq
    ns = config.n_samples
    ex = config.geometry.element_x
    n_el = ex.shape[0]
    half = config.pulse.duration / 2.0
    width = int(math.ceil(2.0 * half * fs)) + 1
    taps = np.arange(width)
    out = np.zeros(n_el * ns, dtype=np.float64)
    el_offset = (np.arange(n_el) * ns)[None, :, None]
    for start in range(0, len(sc), _BATCH):
        x = sc.x[start:start + _BATCH]
        z = sc.z[start:start + _BATCH]
        amp = sc.amplitude[start:start + _BATCH]
        tau = round_trip_delay(x, z, theta, ex, c)
        first = np.ceil((tau - half) * fs).astype(np.int64)
        n = first[..., None] + taps
        val = amp[:, None, None] * pulse_waveform(n / fs - tau[..., None], config.pulse)
        ok = (n >= 0) & (n < ns)
        out += np.bincount((el_offset + n)[ok], weights=val[ok], minlength=n_el * ns)
    return out.reshape(n_el, ns)


def simulate(phantom: Phantom, config: AcquisitionConfig, *, workers: int = 1) -> ChannelData:
    """Synthesize channel data for every (frame, angle) transmit event.

    Positions are updated per transmit event at t_k = k / prf. Noise (if
    `phantom.noise_snr_db` is set) and quantization (if
    `config.quantization_bits` is set) are applied last.
    """
    t0 = time.perf_counter()
    field = ScattererField(phantom)
    snap = field.at(0.0)
    gains = (phantom.tissue_amplitude, phantom.blood_amplitude)
    if not (all(math.isfinite(g) for g in gains) and np.all(np.isfinite(snap.amplitude))):
        raise InputValidationError("phantom has non-finite scatterer amplitudes")
    if not (np.all(np.isfinite(snap.x)) and np.all(np.isfinite(snap.z))):
        raise InputValidationError("phantom has non-finite scatterer positions")

    max_depth = config.max_depth
    events: List[Tuple[int, int]] = [(f, a) for f in range(config.n_frames) for a in range(config.n_angles)]

    def one(ev: Tuple[int, int]) -> Tuple[np.ndarray, int]:
        f, a = ev
        sc = field.at(config.event_time(f, a))
        keep = (sc.z > 0.0) & (sc.z <= max_depth)
        if not np.all(keep):
            sc = Scatterers(x=sc.x[keep], z=sc.z[keep], amplitude=sc.amplitude[keep],
                            vx=sc.vx[keep], vz=sc.vz[keep])
        return _echo(sc, config.steering_angles[a], config), int((~keep).sum())

    results = run_parallel(one, events, workers)
    samples = np.stack([rf for rf, _ in results]).reshape(
        config.n_frames, config.n_angles, config.geometry.element_count, config.n_samples)
    skipped = sum(s for _, s in results)
    if skipped:
        log_warning("scatterers_skipped", count=skipped, max_depth_m=round(max_depth, 9))

    if phantom.noise_snr_db is not None:
        samples = _add_noise(samples, phantom.seed, phantom.noise_snr_db)

    data = ChannelData(samples=samples, config=config)
    if config.quantization_bits is not None:
        data = quantize(data, config.quantization_bits)
    log_info("simulate_done", frames=config.n_frames, angles=config.n_angles,
             elements=config.geometry.element_count, samples=config.n_samples,
             scatterers=len(field), latency_ms=elapsed_ms(t0))
    return data


def _add_noise(samples: np.ndarray, seed: int, snr_db: float) -> np.ndarray:
    rms = float(np.sqrt(np.mean(samples ** 2)))
    if rms == 0.0:
        return samples
    sigma = rms / 10.0 ** (snr_db / 20.0)
    out = samples.copy()
    nf, na = samples.shape[:2]
    for f in range(nf):
        for a in range(na):
            rng = np.random.default_rng([seed, _STREAM_NOISE, f, a])
            out[f, a] += sigma * rng.standard_normal(samples.shape[2:])
    return out


def quantize(data: ChannelData, bits: int) -> ChannelData:
    """Mid-rise quantization to signed `bits`-bit codes, full scale at the global max |v|."""
    if not 2 <= bits <= 24:
        raise PreconditionError("quantization bits must be within 2..24")
    cfg = data.config.model_copy(update={"quantization_bits": bits})
    peak = float(np.max(np.abs(data.samples))) if data.samples.size else 0.0
    if peak == 0.0:
        return ChannelData(samples=data.samples, config=cfg)
    top = 2 ** (bits - 1) - 1
    codes = np.clip(np.floor(data.samples * (top / peak)), -top - 1, top)
    return ChannelData(samples=codes, config=cfg)


# tissue scatterers per mm^2 of region for the built-in phantoms
_DEMO_TISSUE_DENSITY = 2000.0
# tissue echoes 30 dB above blood
_DEMO_TISSUE_GAIN = 10.0 ** (30.0 / 20.0)
# capillary lumen: radius in wavelengths, blood scatterers per mm^2
_DEMO_VESSEL_RADIUS = 0.1
_DEMO_BLOOD_DENSITY = 60000.0
BUILTIN_PHANTOMS = ("two_vessels", "single_vessel", "static_tissue", "point", "empty")


def builtin_phantom(name: str, grid: BeamGrid, config: AcquisitionConfig, seed: int = 0) -> Phantom:
    """Phantoms scaled to an acquisition: capillary-sized vessels running axially through the grid.

    Peak flow gives about pi/4 of lag-1 Doppler phase at the compounded frame rate.
    """
    lam = config.wavelength
    region = Region.from_grid(grid)
    x_mid = grid.x0 + grid.dx * (grid.nx - 1) / 2.0
    top, bottom = max(grid.z0 - lam, grid.dz), grid.z_max + lam
    peak = lam * float(config.frame_rate) / 16.0
    area = (region.x_max - region.x_min) * (region.z_max - region.z_min) * 1e6
    tissue = dict(tissue_scatterer_count=int(round(_DEMO_TISSUE_DENSITY * area)), tissue_amplitude=_DEMO_TISSUE_GAIN)

    def vessel(x: float, v: float) -> Vessel:
        return Vessel(p0=(x, top), p1=(x, bottom), radius=_DEMO_VESSEL_RADIUS * lam, peak_velocity=v,
                      scatterer_density=_DEMO_BLOOD_DENSITY)

    if name == "two_vessels":
        return Phantom(vessels=[vessel(x_mid - lam / 2, peak), vessel(x_mid + lam / 2, -peak)],
                       region=region, seed=seed, noise_snr_db=40.0, **tissue)
    if name == "single_vessel":
        return Phantom(vessels=[vessel(x_mid, peak)], region=region, seed=seed, noise_snr_db=40.0, **tissue)
    if name == "static_tissue":
        return Phantom(region=region, seed=seed, **tissue)
    if name == "point":
        z_mid = grid.z0 + grid.dz * (grid.nz - 1) / 2.0
        return Phantom(points=[PointScatterer(x=x_mid, z=z_mid)], region=region, seed=seed)
    if name == "empty":
        return Phantom(region=region, seed=seed)
    raise InputValidationError(f"unknown built-in phantom '{name}' (known: {', '.join(BUILTIN_PHANTOMS)})")
