"""Delay-and-sum beamforming with zero-mean, DC-offset and rectangle apodizations.

Every pixel of every frame gets four real samples, one per weight vector
(zm, dc1, dc2, rect), coherently compounded over the steering angles. The
receive subaperture follows a fixed f-number; weights are rebuilt for the
actual subaperture length, so truncated apertures at the grid edges keep the
zero-mean construction.

The kernel works on fixed row blocks of the grid. Within a block the angle
sum runs in steering-angle order, so output bits do not depend on how many
workers process the blocks.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptySubapertureError, PreconditionError
from .geometry import (coverage_mask, receive_delay, round_trip_delay, subaperture, subaperture_bounds,
                       transmit_delay)
from .logging_utils import elapsed_ms, log_info
from .models import AcquisitionConfig, BeamformConfig, BeamGrid
from .phantom import ChannelData
from .tooling import run_parallel

ZM, DC1, DC2, RECT = 0, 1, 2, 3
APODIZATIONS = ("zm", "dc1", "dc2", "rect")


def square_window(n: int) -> np.ndarray:
    """Odd-symmetric square wave: +1 first half, -1 second half, 0 at an odd center."""
    half = n // 2
    w = np.zeros(n, dtype=np.float64)
    w[:half] = 1.0
    w[n - half:] = -1.0
    return w


# zero-mean window shapes by name; each must return an exactly zero-mean vector
ZERO_MEAN_WINDOWS: Dict[str, Callable[[int], np.ndarray]] = {
    "square": square_window,
}


@dataclass(frozen=True)
class ApodizationTriple:
    w_zm: np.ndarray
    w_dc1: np.ndarray
    w_dc2: np.ndarray
    dc_offset: float


@dataclass(frozen=True)
class DelayedSubaperture:
    """Delay-compensated samples of one pixel, one frame, one angle."""

    values: np.ndarray
    elements: range

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class BeamformedStack:
    """Real beamformed samples [apodization][frame][nz][nx] (zm, dc1, dc2, rect)."""

    rf: np.ndarray
    grid: BeamGrid
    config: AcquisitionConfig
    beamform_config: BeamformConfig

    @property
    def n_frames(self) -> int:
        return int(self.rf.shape[1])

    def coverage(self) -> np.ndarray:
        return coverage_mask(self.grid, self.config.geometry, self.beamform_config.f_number)


def make_apodizations(n: int, dc_offset: float, shape: str = "square") -> ApodizationTriple:
    """Build (w_zm, w_dc1, w_dc2) for an n-element subaperture."""
    if n < 2:
        raise PreconditionError("zero-mean apodization needs at least 2 elements")
    try:
        window = ZERO_MEAN_WINDOWS[shape]
    except KeyError:
        raise PreconditionError(f"unknown zero-mean window '{shape}'") from None
    zm = window(n)
    return ApodizationTriple(w_zm=zm, w_dc1=zm + dc_offset, w_dc2=-zm + dc_offset, dc_offset=dc_offset)


def _zero_mean_table(n_max: int, shape: str) -> np.ndarray:
    """table[n, k] = zero-mean weight of local element k in an n-element subaperture."""
    table = np.zeros((n_max + 1, max(n_max, 1)), dtype=np.float64)
    for n in range(2, n_max + 1):
        table[n, :n] = make_apodizations(n, 0.5, shape).w_zm
    return table


def sample_traces(rf: np.ndarray, delay: np.ndarray, interpolation: str) -> np.ndarray:
    """Sample traces rf[e, :] at fractional indices delay[..., e]; out of range gives 0."""
    ns = rf.shape[-1]
    el = np.arange(rf.shape[0])
    if interpolation == "nearest":
        idx = np.floor(delay + 0.5).astype(np.int64)
        ok = (idx >= 0) & (idx <= ns - 1)
        return np.where(ok, rf[el, np.clip(idx, 0, ns - 1)], 0.0)
    ok = (delay >= 0.0) & (delay <= ns - 1)
    i0 = np.clip(np.floor(delay), 0, ns - 2).astype(np.int64)
    frac = delay - i0
    val = rf[el, i0] * (1.0 - frac) + rf[el, i0 + 1] * frac
    return np.where(ok, val, 0.0)


def delay_and_gather(data: ChannelData, frame: int, angle: int, pixel: Tuple[float, float],
                     beamform_config: Optional[BeamformConfig] = None) -> DelayedSubaperture:
    """Delay-compensated subaperture samples for one pixel."""
    bf = beamform_config or BeamformConfig()
    cfg = data.config
    x, z = pixel
    elements = subaperture(pixel, cfg.geometry, bf.f_number)
    if len(elements) == 0:
        raise EmptySubapertureError(f"pixel ({x:.6g}, {z:.6g}) has an empty subaperture")
    ex = cfg.geometry.element_x[elements.start:elements.stop]
    c = cfg.speed_of_sound
    tau = round_trip_delay(x, z, cfg.steering_angles[angle], ex, c)[0]
    rf = data.samples[frame, angle, elements.start:elements.stop]
    return DelayedSubaperture(values=sample_traces(rf, tau * cfg.sampling_freq, bf.interpolation),
                              elements=elements)


def _check_depth(cfg: AcquisitionConfig, grid: BeamGrid) -> None:
    if cfg.n_samples < 2:
        raise PreconditionError("beamforming needs at least 2 fast-time samples")
    if grid.z_max > cfg.max_depth:
        raise PreconditionError(
            f"grid reaches {grid.z_max:.6g} m but {cfg.n_samples} samples only cover {cfg.max_depth:.6g} m")


def _beamform_rows(data: ChannelData, frames: Sequence[int], grid: BeamGrid, bf: BeamformConfig,
                   rows: range, table: np.ndarray) -> np.ndarray:
    """Four apodized, compounded images of rows [rows] for the given frames: [4, F, len(rows), nx]."""
    cfg = data.config
    geom = cfg.geometry
    c, fs = cfg.speed_of_sound, cfg.sampling_freq
    n_el = geom.element_count

    zz, xx = np.meshgrid(grid.z[rows.start:rows.stop], grid.x, indexing="ij")
    x, z = xx.ravel(), zz.ravel()
    lo, hi = subaperture_bounds(x, z, geom, bf.f_number)
    count = hi - lo
    local = np.arange(n_el)[None, :] - lo[:, None]
    inside = (local >= 0) & (local < count[:, None])
    zm = np.where(inside, table[count[:, None], np.clip(local, 0, table.shape[1] - 1)], 0.0)
    rect = inside.astype(np.float64)
    weights = np.stack([zm, zm + bf.dc_offset * rect, -zm + bf.dc_offset * rect, rect])

    rx = receive_delay(x, z, geom.element_x, c)
    delays = [(transmit_delay(x, z, theta, c)[:, None] + rx) * fs for theta in cfg.steering_angles]

    out = np.zeros((4, len(frames), x.shape[0]), dtype=np.float64)
    for fi, f in enumerate(frames):
        for a, d in enumerate(delays):
            gathered = sample_traces(data.samples[f, a], d, bf.interpolation)
            out[:, fi] += np.einsum("wpe,pe->wp", weights, gathered)
    return out.reshape(4, len(frames), len(rows), grid.nx)


def _beamform(data: ChannelData, frames: Sequence[int], grid: BeamGrid, bf: BeamformConfig,
              workers: int, row_block: int) -> np.ndarray:
    _check_depth(data.config, grid)
    table = _zero_mean_table(data.config.geometry.element_count, bf.apodization)
    blocks: List[range] = [range(r, min(r + row_block, grid.nz)) for r in range(0, grid.nz, row_block)]
    parts = run_parallel(lambda rows: _beamform_rows(data, frames, grid, bf, rows, table), blocks, workers)
    return np.concatenate(parts, axis=2)


def beamform_frame(data: ChannelData, frame: int, grid: BeamGrid,
                   beamform_config: Optional[BeamformConfig] = None, *,
                   workers: int = 1, row_block: int = 8) -> np.ndarray:
    """One compounded frame: real array [4, nz, nx] (zm, dc1, dc2, rect).

    Pixels with an empty subaperture are 0; see `coverage_mask`.
    """
    if not 0 <= frame < data.config.n_frames:
        raise PreconditionError(f"frame {frame} out of range")
    return _beamform(data, [frame], grid, beamform_config or BeamformConfig(), workers, row_block)[:, 0]


def beamform_all(data: ChannelData, grid: BeamGrid, beamform_config: Optional[BeamformConfig] = None, *,
                 workers: int = 1, row_block: int = 8) -> BeamformedStack:
    t0 = time.perf_counter()
    bf = beamform_config or BeamformConfig()
    cfg = data.config
    rf = _beamform(data, range(cfg.n_frames), grid, bf, workers, row_block)
    stack = BeamformedStack(rf=rf, grid=grid, config=cfg, beamform_config=bf)
    log_info("beamform_done", frames=cfg.n_frames, nz=grid.nz, nx=grid.nx, angles=cfg.n_angles,
             covered=int(stack.coverage().sum()), latency_ms=elapsed_ms(t0))
    return stack
