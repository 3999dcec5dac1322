"""Phase subtraction imaging (PSI) and color flow (CFI) phase maps.

Every frame pair (n, n+1) contributes the principal value of
arg(a^n * conj(s * b^(n+1))) at each pixel; contributions are summed over
pairs in frame order. Pairs never cross set boundaries: a multi-set
acquisition is accumulated set by set.

    P1 = pp(dc1, dc2, negate)    P2 = pp(dc2, dc1, negate)
    P3 = pp(dc1, zm)             P4 = pp(dc2, zm, negate)
    precursor_a = P1 + P2        precursor_b = P3 + P4
    psi = precursor_b - precursor_a
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Optional, Tuple, Union

import numpy as np

from .beamform import DC1, DC2, RECT, ZM
from .errors import DimensionMismatchError, PreconditionError
from .geometry import coverage_mask
from .iqfilter import FilteredIQStack
from .logging_utils import elapsed_ms, log_info
from .models import AcquisitionConfig, BeamformConfig, BeamGrid

ImageKind = Literal["psi", "cfi", "precursor_a", "precursor_b"]
IMAGE_KINDS: Tuple[str, ...] = ("psi", "cfi", "precursor_a", "precursor_b")


@dataclass(frozen=True)
class PhaseTerms:
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    p4: np.ndarray
    n_pairs: int
    symmetric: bool = False
    grid: Optional[BeamGrid] = None
    config: Optional[AcquisitionConfig] = None
    beamform_config: Optional[BeamformConfig] = None


@dataclass(frozen=True)
class PhaseImage:
    """Accumulated phase map in radians, [nz'][nx]."""

    values: np.ndarray
    kind: ImageKind
    n_pairs: int
    grid: Optional[BeamGrid] = None
    config: Optional[AcquisitionConfig] = None
    beamform_config: Optional[BeamformConfig] = None

    def __post_init__(self) -> None:
        if self.kind not in IMAGE_KINDS:
            raise PreconditionError(f"unknown phase image kind '{self.kind}'")
        if self.grid is not None and self.values.shape != self.grid.shape:
            raise DimensionMismatchError(f"image {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def pitch(self) -> Tuple[float, float]:
        """(dx, dz) in meters; unit pitch when no grid is attached."""
        if self.grid is None:
            return 1.0, 1.0
        return self.grid.dx, self.grid.dz

    def coverage(self) -> np.ndarray:
        if self.grid is None or self.config is None:
            return np.ones(self.values.shape, dtype=bool)
        bf = self.beamform_config or BeamformConfig()
        return coverage_mask(self.grid, self.config.geometry, bf.f_number)


def _principal_angle(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    ang = np.arctan2(im, re)
    ang = np.where(ang <= -np.pi, np.pi, ang)
    return np.where((re == 0) & (im == 0), 0.0, ang)


def pairwise_phase(a: np.ndarray, b: np.ndarray, negate_b: bool = False) -> np.ndarray:
    """Sum over n of arg(a[n] * conj(s * b[n+1])), s = -1 if negate_b; arg in (-pi, pi]."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"frame sequences differ in shape: {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise PreconditionError("no frame pairs")
    sign = -1.0 if negate_b else 1.0
    ar, ai = np.real(a).astype(np.float64), np.imag(a).astype(np.float64)
    br, bi = sign * np.real(b).astype(np.float64), sign * np.imag(b).astype(np.float64)
    acc = np.zeros(a.shape[1:], dtype=np.float64)
    for n in range(a.shape[0] - 1):
        # a[n] * conj(b[n+1]) written out so that a == b gives an exactly zero imaginary part
        re = ar[n] * br[n + 1] + ai[n] * bi[n + 1]
        im = ai[n] * br[n + 1] - ar[n] * bi[n + 1]
        acc += _principal_angle(re, im)
    return acc


def _set_slices(nf: int, n_sets: int) -> Iterable[slice]:
    if n_sets < 1 or nf % n_sets != 0:
        raise DimensionMismatchError(f"{nf} frames cannot be split into {n_sets} equal sets")
    per = nf // n_sets
    if per < 2:
        raise PreconditionError("no frame pairs")
    return [slice(i * per, (i + 1) * per) for i in range(n_sets)]


def _resolve_sets(filtered: FilteredIQStack, n_sets: Optional[int]) -> int:
    if n_sets is not None:
        return n_sets
    cfg = filtered.config
    return cfg.n_sets if filtered.n_frames == cfg.n_frames else 1


def _terms_one_set(zm: np.ndarray, dc1: np.ndarray, dc2: np.ndarray, symmetric: bool) -> PhaseTerms:
    return PhaseTerms(
        p1=pairwise_phase(dc1, dc2, negate_b=True),
        p2=pairwise_phase(dc2, dc1, negate_b=True),
        p3=pairwise_phase(dc1, zm, negate_b=symmetric),
        p4=pairwise_phase(dc2, zm, negate_b=True),
        n_pairs=zm.shape[0] - 1,
        symmetric=symmetric,
    )


def accumulate_terms(parts: Iterable[PhaseTerms]) -> PhaseTerms:
    """Elementwise sum of per-set terms, in the given order."""
    parts = list(parts)
    if not parts:
        raise PreconditionError("no frame pairs")
    first = parts[0]
    p1, p2, p3, p4 = (np.zeros_like(first.p1) for _ in range(4))
    for t in parts:
        p1 += t.p1
        p2 += t.p2
        p3 += t.p3
        p4 += t.p4
    return replace(first, p1=p1, p2=p2, p3=p3, p4=p4, n_pairs=sum(t.n_pairs for t in parts))


def phase_terms(filtered: FilteredIQStack, *, symmetric: bool = False, n_sets: Optional[int] = None) -> PhaseTerms:
    """P1..P4 of a filtered stack, accumulated over all sets; zero outside the coverage mask.

    `symmetric=True` negates zm in P3 as in P4.
    """
    t0 = time.perf_counter()
    iq = filtered.iq
    if iq.shape[0] != 4:
        raise DimensionMismatchError(f"expected 4 apodizations, got {iq.shape[0]}")
    sets = _resolve_sets(filtered, n_sets)
    parts = [_terms_one_set(iq[ZM, s], iq[DC1, s], iq[DC2, s], symmetric)
             for s in _set_slices(iq.shape[1], sets)]
    terms = accumulate_terms(parts)
    mask = filtered.coverage()
    terms = replace(terms, p1=np.where(mask, terms.p1, 0.0), p2=np.where(mask, terms.p2, 0.0),
                    p3=np.where(mask, terms.p3, 0.0), p4=np.where(mask, terms.p4, 0.0),
                    grid=filtered.grid, config=filtered.config, beamform_config=filtered.beamform_config)
    log_info("psi_done", pairs=terms.n_pairs, sets=sets, symmetric=symmetric, latency_ms=elapsed_ms(t0))
    return terms


def psi_image(terms: PhaseTerms) -> Tuple[PhaseImage, PhaseImage, PhaseImage]:
    """(psi, precursor_a, precursor_b) with psi = precursor_b - precursor_a."""
    pre_a = terms.p1 + terms.p2
    pre_b = terms.p3 + terms.p4
    meta = dict(n_pairs=terms.n_pairs, grid=terms.grid, config=terms.config, beamform_config=terms.beamform_config)
    return (PhaseImage(values=pre_b - pre_a, kind="psi", **meta),
            PhaseImage(values=pre_a, kind="precursor_a", **meta),
            PhaseImage(values=pre_b, kind="precursor_b", **meta))


def cfi_image(filtered: Union[FilteredIQStack, np.ndarray], *, n_sets: Optional[int] = None) -> PhaseImage:
    """Lag-1 phase of the rectangle beam, summed over frame pairs (and sets).

    Accepts a filtered stack (uses its rect apodization) or a bare complex
    frame sequence [nf, nz, nx].
    """
    t0 = time.perf_counter()
    if isinstance(filtered, FilteredIQStack):
        rect = filtered.iq[RECT]
        sets = _resolve_sets(filtered, n_sets)
        meta = dict(grid=filtered.grid, config=filtered.config, beamform_config=filtered.beamform_config)
        mask = filtered.coverage()
    else:
        rect = np.asarray(filtered)
        sets = n_sets or 1
        meta = {}
        mask = None
    if rect.shape[0] < 2:
        raise PreconditionError("no frame pairs")
    values = np.zeros(rect.shape[1:], dtype=np.float64)
    pairs = 0
    for s in _set_slices(rect.shape[0], sets):
        values += pairwise_phase(rect[s], rect[s])
        pairs += rect[s].shape[0] - 1
    if mask is not None:
        values = np.where(mask, values, 0.0)
    log_info("cfi_done", pairs=pairs, sets=sets, latency_ms=elapsed_ms(t0))
    return PhaseImage(values=values, kind="cfi", n_pairs=pairs, **meta)
