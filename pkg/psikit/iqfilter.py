"""IQ demodulation along depth and SVD clutter filtering.

`iq_demodulate` mixes each beamformed depth line to baseband, low-passes it
with a zero-phase hann-windowed FIR and keeps every `decim`-th row.
`svd_clutter_filter` keeps the middle band of singular components of each
apodization's Casorati matrix (pixels x frames).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import ndimage, signal

from .beamform import APODIZATIONS, BeamformedStack
from .errors import DimensionMismatchError, NumericalError, PreconditionError
from .geometry import coverage_mask
from .logging_utils import elapsed_ms, log_debug, log_info
from .models import AcquisitionConfig, BeamformConfig, BeamGrid
from .tooling import run_parallel

# fraction of the post-decimation axial Nyquist kept by the low-pass
CUTOFF_FRACTION = 0.8


@dataclass(frozen=True)
class IQStack:
    """Complex baseband stack [apodization][frame][nz'][nx] on the decimated grid."""

    iq: np.ndarray
    grid: BeamGrid
    config: AcquisitionConfig
    beamform_config: BeamformConfig
    decim: int
    demod_freq: float

    def __post_init__(self) -> None:
        if self.iq.ndim != 4 or self.iq.shape[2:] != self.grid.shape:
            raise DimensionMismatchError(f"iq shape {self.iq.shape} does not match grid {self.grid.shape}")

    @property
    def n_frames(self) -> int:
        return int(self.iq.shape[1])

    def coverage(self) -> np.ndarray:
        return coverage_mask(self.grid, self.config.geometry, self.beamform_config.f_number)


@dataclass(frozen=True)
class FilteredIQStack(IQStack):
    """Clutter-filtered IQ; singular components [lo, hi) were kept."""

    lo: int = 0
    hi: int = 0
    low_frac: float = 0.0
    high_frac: float = 0.0

    def __post_init__(self) -> None:
        super().__post_init__()
        k = min(self.iq.shape[2] * self.iq.shape[3], self.iq.shape[1])
        if not 0 <= self.lo < self.hi <= k:
            raise PreconditionError(f"retained range [{self.lo}, {self.hi}) invalid for K={k}")


def lowpass_taps(taps: int, decim: int) -> np.ndarray:
    return signal.firwin(taps, CUTOFF_FRACTION / decim, window="hann")


def iq_demodulate(stack: BeamformedStack, demod_freq: Optional[float] = None, decim: int = 1,
                  taps: int = 63) -> IQStack:
    """Baseband IQ of every apodization, frame and lateral line."""
    t0 = time.perf_counter()
    grid = stack.grid
    if decim < 1 or decim > grid.nz:
        raise PreconditionError(f"decimation {decim} must be within 1..nz ({grid.nz})")
    fd = demod_freq if demod_freq is not None else stack.config.effective_demod_freq
    if fd <= 0:
        raise PreconditionError("demodulation frequency must be > 0")

    t_axial = 2.0 * grid.z / stack.config.speed_of_sound
    mixer = np.exp(-2j * np.pi * fd * t_axial)[None, None, :, None]
    base = stack.rf * mixer
    h = lowpass_taps(taps, decim)
    re = ndimage.convolve1d(base.real, h, axis=2, mode="constant")
    im = ndimage.convolve1d(base.imag, h, axis=2, mode="constant")
    iq = 2.0 * (re + 1j * im)[:, :, ::decim]
    if not np.all(np.isfinite(iq)):
        raise NumericalError("non-finite IQ samples")
    out = IQStack(iq=iq, grid=grid.decimated(decim), config=stack.config,
                  beamform_config=stack.beamform_config, decim=decim, demod_freq=fd)
    log_info("iq_done", demod_freq=fd, decim=decim, nz_out=out.grid.nz, latency_ms=elapsed_ms(t0))
    return out


def build_casorati(iq: IQStack, apod: int) -> np.ndarray:
    """[n_pixels, n_frames]; column n is frame n flattened z-major."""
    frames = iq.iq[apod]
    return frames.reshape(frames.shape[0], -1).T


def casorati_to_frames(matrix: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Inverse of `build_casorati`: [n_frames, nz, nx]."""
    return matrix.T.reshape(matrix.shape[1], *shape)


def retained_range(k: int, low_frac: float, high_frac: float) -> Tuple[int, int]:
    lo = int(math.floor(low_frac * k))
    hi = k - int(math.floor(high_frac * k))
    if not (0 <= lo < hi <= k):
        raise PreconditionError(f"rejection fractions {low_frac}/{high_frac} leave no components of {k}")
    return lo, hi


def _filter_one(matrix: np.ndarray, lo: int, hi: int, apod: int) -> np.ndarray:
    try:
        u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for apodization {APODIZATIONS[apod]}: {exc}", apod=apod) from exc
    energy = float(np.sum(s ** 2))
    log_debug("svd_spectrum", apod=APODIZATIONS[apod], s_max=float(s[0]) if s.size else 0.0,
              kept_energy=float(np.sum(s[lo:hi] ** 2)) / energy if energy > 0.0 else 0.0)
    return (u[:, lo:hi] * s[lo:hi]) @ vh[lo:hi]


def svd_clutter_filter(iq: Union[IQStack, FilteredIQStack], low_frac: float = 0.10, high_frac: float = 0.10,
                       *, workers: int = 1) -> FilteredIQStack:
    """Reject the first/last fractions of singular components, per apodization.

    An already filtered stack with the same fractions is a fixed point: its
    rank-(hi - lo) content is kept whole, not re-trimmed.
    """
    nf = iq.n_frames
    if nf < 3:
        raise PreconditionError(f"SVD clutter filter needs >= 3 frames, got {nf}")
    shape = iq.grid.shape
    k = min(shape[0] * shape[1], nf)
    lo, hi = retained_range(k, low_frac, high_frac)
    keep = (lo, hi)
    if isinstance(iq, FilteredIQStack) and (iq.low_frac, iq.high_frac) == (low_frac, high_frac):
        keep = (0, hi - lo)

    def one(apod: int) -> np.ndarray:
        t0 = time.perf_counter()
        out = casorati_to_frames(_filter_one(build_casorati(iq, apod), keep[0], keep[1], apod), shape)
        log_info("svd_done", apod=APODIZATIONS[apod], lo=lo, hi=hi, k=k, latency_ms=elapsed_ms(t0))
        return out

    filtered = np.stack(run_parallel(one, range(iq.iq.shape[0]), workers))
    if not np.all(np.isfinite(filtered)):
        raise NumericalError("non-finite values after clutter filtering")
    return FilteredIQStack(iq=filtered, grid=iq.grid, config=iq.config, beamform_config=iq.beamform_config,
                           decim=iq.decim, demod_freq=iq.demod_freq, lo=lo, hi=hi,
                           low_frac=low_frac, high_frac=high_frac)
