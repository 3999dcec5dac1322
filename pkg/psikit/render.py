"""Raster export of phase images (binary PGM / PPM)."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Tuple, Union

import numpy as np

from .errors import InputValidationError
from .phasemap import PhaseImage
from .tooling import atomic_write_bytes

Style = Literal["gray", "color"]


def _norm(image: PhaseImage) -> Tuple[np.ndarray, float]:
    v = np.asarray(image.values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise InputValidationError("cannot render an image with non-finite values")
    peak = float(np.abs(v).max()) if v.size else 0.0
    return (v / peak if peak > 0 else np.zeros_like(v)), peak


def encode_pgm(image: PhaseImage) -> Tuple[bytes, float]:
    """P5, 16-bit big-endian, |values| scaled to [0, 65535]. Returns (bytes, normalization max)."""
    n, peak = _norm(image)
    nz, nx = n.shape
    pixels = np.rint(np.abs(n) * 65535.0).astype(">u2")
    return f"P5\n{nx} {nz}\n65535\n".encode("ascii") + pixels.tobytes(), peak


def encode_ppm(image: PhaseImage) -> Tuple[bytes, float]:
    """P6, 8-bit; positive phase ramps red, negative ramps blue, 0 is black."""
    n, peak = _norm(image)
    nz, nx = n.shape
    rgb = np.zeros((nz, nx, 3), dtype=np.uint8)
    rgb[..., 0] = np.rint(np.clip(n, 0.0, 1.0) * 255.0).astype(np.uint8)
    rgb[..., 2] = np.rint(np.clip(-n, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P6\n{nx} {nz}\n255\n".encode("ascii") + rgb.tobytes(), peak


def render(image: PhaseImage, path: Union[str, Path], style: Style = "gray") -> float:
    """Write a raster file; returns the normalization max (0 for an all-zero image)."""
    blob, peak = encode_pgm(image) if style == "gray" else encode_ppm(image)
    atomic_write_bytes(path, blob)
    return peak
