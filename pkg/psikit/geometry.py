"""Plane-wave propagation delays, receive aperture selection (fixed f-number) and grid coverage."""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from .errors import PreconditionError
from .models import ArrayGeometry, BeamGrid


def transmit_delay(x: np.ndarray | float, z: np.ndarray | float, theta: float, c: float) -> np.ndarray:
    """Arrival time of a plane wave steered by theta at (x, z); the wavefront crosses the origin at t = 0."""
    return (np.asarray(z) * math.cos(theta) + np.asarray(x) * math.sin(theta)) / c


def receive_delay(x: np.ndarray | float, z: np.ndarray | float, element_x: np.ndarray, c: float) -> np.ndarray:
    """Echo travel times [P, E] from points (x[p], z[p]) to every element."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    return np.hypot(x[:, None] - element_x[None, :], z[:, None]) / c


def round_trip_delay(x: np.ndarray | float, z: np.ndarray | float, theta: float,
                     element_x: np.ndarray, c: float) -> np.ndarray:
    """Transmit plus receive delay [P, E] for steering angle theta."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    return transmit_delay(x, z, theta, c)[:, None] + receive_delay(x, z, element_x, c)


def subaperture_bounds(x: np.ndarray, z: np.ndarray, geometry: ArrayGeometry,
                       f_number: float) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized subaperture: element ranges [lo, hi) for each pixel (x[i], z[i]).

    Element i belongs to a pixel's subaperture when |element_x[i] - x| <= z / (2 f_number).
    Empty ranges come back with lo == hi.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if np.any(z <= 0.0):
        raise PreconditionError("subaperture requires z > 0")
    half = z / (2.0 * f_number)
    inside = np.abs(geometry.element_x[None, :] - x[:, None]) <= half[:, None]
    count = inside.sum(axis=1)
    lo = np.where(count > 0, np.argmax(inside, axis=1), 0)
    return lo.astype(np.int64), (lo + count).astype(np.int64)


def subaperture(pixel: Tuple[float, float], geometry: ArrayGeometry, f_number: float) -> range:
    """Contiguous element indices seen by pixel (x, z); may be empty."""
    x, z = pixel
    lo, hi = subaperture_bounds(np.array([x]), np.array([z]), geometry, f_number)
    return range(int(lo[0]), int(hi[0]))


def coverage_mask(grid: BeamGrid, geometry: ArrayGeometry, f_number: float) -> np.ndarray:
    """Boolean [nz, nx]: True where the subaperture is non-empty."""
    zz, xx = np.meshgrid(grid.z, grid.x, indexing="ij")
    lo, hi = subaperture_bounds(xx.ravel(), zz.ravel(), geometry, f_number)
    return (hi > lo).reshape(grid.shape)
