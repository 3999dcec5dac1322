"""Resolution metrics: skeleton FWHM radii and spatial-frequency coverage.

- skeletonize(): -6 dB binarization + Zhang-Suen thinning (scikit-image)
- radius_fwhm(): per skeleton pixel, distance to the nearest half-value pixel
- radial_profile() / coverage_ratio(): annular mean of |FFT2| and the
  PSI-over-CFI frequency reach at the CFI amplitude at 1 / wavelength
- lateral_profile() / lateral_fwhm() / peak_dip(): cross-section helpers
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft
from skimage import morphology

from .errors import DimensionMismatchError, InputValidationError, NoVesselsError, ResolutionError
from .logging_utils import log_info
from .models import MetricsReport
from .phasemap import PhaseImage

ImageLike = Union[PhaseImage, np.ndarray]
# skeleton pixels per distance batch scale with this budget / image size
_DISTANCE_BUDGET = 4_000_000


@dataclass(frozen=True)
class VesselSkeleton:
    pixels: np.ndarray  # [K, 2] (iz, ix), row-major order
    foreground: np.ndarray
    threshold: float
    threshold_db: float

    def __len__(self) -> int:
        return int(self.pixels.shape[0])

    def as_set(self) -> set:
        return {(int(iz), int(ix)) for iz, ix in self.pixels}


def _values(image: ImageLike) -> np.ndarray:
    vals = image.values if isinstance(image, PhaseImage) else np.asarray(image)
    if vals.ndim != 2:
        raise DimensionMismatchError(f"expected a 2D image, got shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise InputValidationError("image has non-finite values")
    return vals


def _pitch(image: ImageLike, pitch: Optional[Tuple[float, float]]) -> Tuple[float, float]:
    if pitch is not None:
        return pitch
    if isinstance(image, PhaseImage):
        return image.pitch
    return 1.0, 1.0


def thin(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning of a boolean image to an 8-connected, one-pixel-wide skeleton."""
    return np.asarray(morphology.skeletonize(np.asarray(mask, dtype=bool), method="zhang"), dtype=bool)


def skeletonize(image: ImageLike, threshold_db: float = -6.0) -> VesselSkeleton:
    """Binarize |values| >= max * 10^(threshold_db / 20) and thin to one pixel."""
    mag = np.abs(_values(image))
    peak = float(mag.max()) if mag.size else 0.0
    if peak <= 0.0:
        raise NoVesselsError("no vessels above threshold")
    level = peak * 10.0 ** (threshold_db / 20.0)
    fg = mag >= level
    skel = thin(fg)
    if not skel.any():
        # thinning may erase a 2x2 block entirely; keep its strongest pixel
        skel = np.zeros_like(fg)
        skel[np.unravel_index(np.argmax(np.where(fg, mag, -1.0)), mag.shape)] = True
    return VesselSkeleton(pixels=np.argwhere(skel), foreground=fg, threshold=level, threshold_db=threshold_db)


def radius_fwhm(image: ImageLike, skeleton: VesselSkeleton,
                pitch: Optional[Tuple[float, float]] = None) -> Tuple[np.ndarray, int]:
    """Radius (meters) at each skeleton pixel; returns (radii, skipped).

    The radius is the distance to the nearest pixel whose |value| is at most
    half the skeleton pixel's |value|. Skeleton pixels without such a pixel
    are skipped and counted.
    """
    mag = np.abs(_values(image))
    dx, dz = _pitch(image, pitch)
    if len(skeleton) == 0:
        raise NoVesselsError("empty skeleton")
    zz, xx = np.indices(mag.shape)
    pz, px, flat = zz.ravel() * dz, xx.ravel() * dx, mag.ravel()
    sk = skeleton.pixels
    sv = mag[sk[:, 0], sk[:, 1]]
    batch = max(1, _DISTANCE_BUDGET // max(flat.size, 1))
    best = np.empty(len(sk), dtype=np.float64)
    for start in range(0, len(sk), batch):
        part = sk[start:start + batch]
        low = flat[None, :] <= sv[start:start + batch, None] / 2.0
        d2 = (pz[None, :] - part[:, :1] * dz) ** 2 + (px[None, :] - part[:, 1:] * dx) ** 2
        best[start:start + batch] = np.sqrt(np.where(low, d2, np.inf).min(axis=1))
    found = np.isfinite(best)
    return best[found], int((~found).sum())


def radial_profile(image: ImageLike, pitch: Optional[Tuple[float, float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Annular mean of |FFT2| over physical spatial frequency (cycles/m).

    Bins are one DFT step wide (the coarser axis step); bin 0 holds only DC.
    Empty bins are dropped. Returns (frequencies, amplitudes).
    """
    vals = _values(image)
    dx, dz = _pitch(image, pitch)
    nz, nx = vals.shape
    spec = np.abs(fft.fft2(vals))
    fr = np.hypot(*np.meshgrid(fft.fftfreq(nz, d=dz), fft.fftfreq(nx, d=dx), indexing="ij"))
    df = min(1.0 / (nx * dx), 1.0 / (nz * dz))
    bins = np.rint(fr / df).astype(np.int64).ravel()
    total = np.bincount(bins, weights=spec.ravel())
    count = np.bincount(bins)
    used = count > 0
    return np.nonzero(used)[0] * df, total[used] / count[used]


@dataclass(frozen=True)
class CoverageResult:
    ratio: float
    cutoff_amplitude: float
    cutoff_frequency: float
    reached: bool


def coverage_ratio(psi: ImageLike, cfi: ImageLike, wavelength: float,
                   pitch: Optional[Tuple[float, float]] = None) -> CoverageResult:
    """Spatial-frequency reach of PSI at the CFI amplitude found at 1 / wavelength, times wavelength."""
    a = _values(psi)
    b = _values(cfi)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"psi {a.shape} and cfi {b.shape} differ in shape")
    dx, dz = _pitch(psi, pitch)
    f_lambda = 1.0 / wavelength
    if f_lambda >= 1.0 / (2.0 * dx) or f_lambda >= 1.0 / (2.0 * dz):
        raise ResolutionError(f"1/wavelength = {f_lambda:.6g} /m is not below the grid Nyquist")
    f, amp_psi = radial_profile(a, (dx, dz))
    f_c, amp_cfi = radial_profile(b, (dx, dz))
    cutoff = float(np.interp(f_lambda, f_c, amp_cfi))
    above = np.nonzero(amp_psi >= cutoff)[0]
    reached = above.size > 0 and cutoff > 0.0
    if not reached:
        f_star = float(f[1]) if f.size > 1 else float(f[0])
    else:
        i = int(above[-1])
        if i + 1 < f.size:
            step = amp_psi[i] - amp_psi[i + 1]
            frac = (amp_psi[i] - cutoff) / step if step > 0 else 0.0
            f_star = float(f[i] + frac * (f[i + 1] - f[i]))
        else:
            f_star = float(f[i])
    return CoverageResult(ratio=f_star * wavelength, cutoff_amplitude=cutoff, cutoff_frequency=f_star, reached=reached)


def radius_histogram(radii: Sequence[float], bin_width: float,
                     top: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Histogram with fixed-width bins starting at 0; returns (edges, counts).

    Bins reach past `top` (default: the largest radius).
    """
    r = np.asarray(radii, dtype=np.float64)
    if top is None:
        top = float(r.max()) if r.size else bin_width
    n_bins = max(1, int(math.floor(top / bin_width)) + 1)
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(r, bins=edges)
    return edges, counts


def lateral_profile(image: ImageLike, rows: Optional[slice] = None) -> np.ndarray:
    """Mean |value| per column over a band of rows (all rows by default)."""
    mag = np.abs(_values(image))
    return mag[rows if rows is not None else slice(None)].mean(axis=0)


def lateral_fwhm(profile: np.ndarray, dx: float = 1.0) -> float:
    """Full width at half maximum around the global peak, edges linearly interpolated."""
    p = np.asarray(profile, dtype=np.float64)
    k = int(np.argmax(p))
    half = p[k] / 2.0
    if half <= 0.0:
        return 0.0
    left = float(k)
    for i in range(k, 0, -1):
        if p[i - 1] < half:
            left = i - (p[i] - half) / (p[i] - p[i - 1])
            break
    else:
        left = 0.0
    right = float(k)
    for i in range(k, p.size - 1):
        if p[i + 1] < half:
            right = i + (p[i] - half) / (p[i] - p[i + 1])
            break
    else:
        right = float(p.size - 1)
    return (right - left) * dx


def peak_dip(profile: np.ndarray, ix1: int, ix2: int, search: int = 1) -> float:
    """Relative dip between two expected peaks: (weaker peak - valley) / weaker peak."""
    p = np.asarray(profile, dtype=np.float64)
    lo, hi = sorted((ix1, ix2))

    def local_max(i: int) -> Tuple[int, float]:
        a, b = max(0, i - search), min(p.size, i + search + 1)
        j = a + int(np.argmax(p[a:b]))
        return j, float(p[j])

    j1, v1 = local_max(lo)
    j2, v2 = local_max(hi)
    peak = min(v1, v2)
    if peak <= 0.0 or j2 <= j1:
        return 0.0
    valley = float(p[j1:j2 + 1].min())
    return (peak - valley) / peak


def metrics_report(psi: PhaseImage, cfi: PhaseImage, *, threshold_db: float = -6.0,
                   histogram_bin_pixels: float = 2.0, wavelength: Optional[float] = None) -> MetricsReport:
    """Radius distributions of PSI and CFI plus the PSI-over-CFI coverage ratio."""
    lam = wavelength if wavelength is not None else (psi.config.wavelength if psi.config else None)
    if lam is None:
        raise InputValidationError("wavelength unknown: image carries no acquisition config")
    dx, dz = psi.pitch
    radii, skipped = radius_fwhm(psi, skeletonize(psi, threshold_db))
    cfi_radii, cfi_skipped = radius_fwhm(cfi, skeletonize(cfi, threshold_db))
    both = np.concatenate([radii, cfi_radii])
    top = float(both.max()) if both.size else None
    width = histogram_bin_pixels * min(dx, dz)
    edges, counts = radius_histogram(radii, width, top)
    _, cfi_counts = radius_histogram(cfi_radii, width, top)
    cov = coverage_ratio(psi, cfi, lam)
    log_info("metrics_done", skeleton=len(radii) + skipped, skipped=skipped,
             coverage_ratio=round(cov.ratio, 4), cutoff_reached=cov.reached)
    return MetricsReport(
        radii=[float(r) for r in radii],
        skipped=skipped,
        cfi_radii=[float(r) for r in cfi_radii],
        cfi_skipped=cfi_skipped,
        histogram_edges=[float(e) for e in edges],
        histogram_counts=[int(c) for c in counts],
        cfi_histogram_counts=[int(c) for c in cfi_counts],
        coverage_ratio=cov.ratio,
        cutoff_amplitude=cov.cutoff_amplitude,
        cutoff_reached=cov.reached,
        threshold_db=threshold_db,
        wavelength=lam,
    )


def format_report(report: MetricsReport) -> str:
    """Plain-text table of a metrics report."""

    def stats(r: List[float]) -> str:
        if not r:
            return "n=0"
        a = np.asarray(r) * 1e6
        return f"n={a.size} median={np.median(a):.3f} um mean={a.mean():.3f} um min={a.min():.3f} um max={a.max():.3f} um"

    lines = [
        f"wavelength_um        {report.wavelength * 1e6:.4f}",
        f"threshold_db         {report.threshold_db:.2f}",
        f"psi_radius           {stats(report.radii)} skipped={report.skipped}",
        f"cfi_radius           {stats(report.cfi_radii)} skipped={report.cfi_skipped}",
        f"coverage_ratio       {report.coverage_ratio:.4f}" + ("" if report.cutoff_reached else " (cutoff not reached)"),
        f"cutoff_amplitude     {report.cutoff_amplitude:.6g}",
        "histogram (um)           psi    cfi",
    ]
    edges = report.histogram_edges
    cfi_counts = report.cfi_histogram_counts or [0] * len(report.histogram_counts)
    for i, (c, cc) in enumerate(zip(report.histogram_counts, cfi_counts)):
        lines.append(f"  [{edges[i] * 1e6:8.3f}, {edges[i + 1] * 1e6:8.3f})  {c:>6} {cc:>6}")
    return "\n".join(lines) + "\n"
