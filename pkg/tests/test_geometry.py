import math

import numpy as np
import pytest

from psikit.errors import PreconditionError
from psikit.geometry import (coverage_mask, receive_delay, round_trip_delay, subaperture, subaperture_bounds,
                             transmit_delay)
from psikit.models import ArrayGeometry, BeamGrid

GEOM = ArrayGeometry(element_count=64, pitch=30e-6)


def test_on_axis_pixel_at_one_mm():
    assert subaperture((0.0, 1e-3), GEOM, 1.0) == range(15, 49)


def test_deep_pixel_sees_whole_array():
    assert subaperture((0.0, 1.0), GEOM, 1.0) == range(0, 64)


def test_far_lateral_pixel_is_empty():
    assert len(subaperture((5e-3, 1e-4), GEOM, 1.0)) == 0


def test_requires_positive_depth():
    with pytest.raises(PreconditionError):
        subaperture((0.0, 0.0), GEOM, 1.0)


def test_vectorized_bounds_match_scalar():
    xs = np.array([-1e-3, 0.0, 4e-4, 2e-3])
    zs = np.array([5e-4, 1e-3, 2e-3, 1e-4])
    lo, hi = subaperture_bounds(xs, zs, GEOM, 1.0)
    for x, z, a, b in zip(xs, zs, lo, hi):
        r = subaperture((x, z), GEOM, 1.0)
        assert (r.start, r.stop) == (a, b) or (len(r) == 0 and a == b)


def test_higher_f_number_narrows_aperture():
    wide = subaperture((0.0, 1e-3), GEOM, 1.0)
    narrow = subaperture((0.0, 1e-3), GEOM, 2.0)
    assert len(narrow) < len(wide)


def test_coverage_mask_marks_uncovered_corners():
    grid = BeamGrid(x0=-3e-3, z0=1e-4, dx=1e-4, dz=1e-4, nx=61, nz=5)
    mask = coverage_mask(grid, GEOM, 1.0)
    assert mask.shape == (5, 61)
    assert mask[:, 30].all()
    assert not mask[0, 0]


def test_transmit_delay_at_nine_degrees():
    assert transmit_delay(0.0, 1e-3, math.radians(9), 1540.0) == pytest.approx(0.64136e-6, rel=1e-5)
    # positive angles reach +x later
    assert transmit_delay(1e-4, 1e-3, 0.1, 1540.0) > transmit_delay(-1e-4, 1e-3, 0.1, 1540.0)


def test_round_trip_is_transmit_plus_receive():
    x, z = np.array([0.0, 2e-4]), np.array([1e-3, 1.5e-3])
    tau = round_trip_delay(x, z, 0.05, GEOM.element_x, 1540.0)
    assert tau.shape == (2, 64)
    np.testing.assert_allclose(tau, transmit_delay(x, z, 0.05, 1540.0)[:, None]
                               + receive_delay(x, z, GEOM.element_x, 1540.0))
    # straight below an element the return path is the depth itself
    np.testing.assert_allclose(receive_delay(GEOM.element_x[10], 1e-3, GEOM.element_x, 1540.0)[0, 10], 1e-3 / 1540.0)
