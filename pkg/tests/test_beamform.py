import math

import numpy as np
import pytest

from psikit.beamform import (
    DC1,
    DC2,
    RECT,
    ZM,
    beamform_all,
    beamform_frame,
    delay_and_gather,
    make_apodizations,
    sample_traces,
    square_window,
)
from psikit.errors import EmptySubapertureError, PreconditionError
from psikit.models import BeamformConfig, BeamGrid, Phantom, PointScatterer, Region
from psikit.phantom import ChannelData, simulate
from psikit.presets import get_preset

from conftest import make_acq, make_grid


def test_apodizations_even():
    t = make_apodizations(4, 0.32)
    np.testing.assert_array_equal(t.w_zm, [1, 1, -1, -1])
    np.testing.assert_allclose(t.w_dc1, [1.32, 1.32, -0.68, -0.68])
    np.testing.assert_allclose(t.w_dc2, [-0.68, -0.68, 1.32, 1.32])


def test_apodizations_odd_has_zero_center():
    np.testing.assert_array_equal(make_apodizations(5, 0.32).w_zm, [1, 1, 0, -1, -1])


@pytest.mark.parametrize("n", [2, 3, 7, 34, 64])
def test_apodization_identities(n):
    t = make_apodizations(n, 0.32)
    assert t.w_zm.sum() == 0.0
    assert t.w_dc1.mean() == pytest.approx(0.32)
    np.testing.assert_allclose(t.w_dc1 + t.w_dc2, 0.64)


def test_apodization_needs_two_elements():
    with pytest.raises(PreconditionError):
        make_apodizations(1, 0.32)


def test_square_window_is_odd_symmetric():
    w = square_window(9)
    np.testing.assert_array_equal(w, -w[::-1])


def test_linear_interpolation_between_samples():
    rf = np.array([[0.0, 2.0, 4.0, 6.0]])
    assert sample_traces(rf, np.array([[0.5]]), "linear")[0, 0] == pytest.approx(1.0)
    assert sample_traces(rf, np.array([[3.0]]), "linear")[0, 0] == pytest.approx(6.0)
    assert sample_traces(rf, np.array([[3.2]]), "linear")[0, 0] == 0.0
    assert sample_traces(rf, np.array([[-0.1]]), "linear")[0, 0] == 0.0
    assert sample_traces(rf, np.array([[1.5]]), "nearest")[0, 0] == 4.0


def test_gather_zero_data():
    acq = make_acq(n_frames=1)
    data = ChannelData(samples=np.zeros((1, 3, 16, 256)), config=acq)
    g = delay_and_gather(data, 0, 1, (0.0, 20 * 3.08e-4))
    assert len(g) == 16
    assert not g.values.any()


def test_gather_empty_subaperture_raises():
    acq = make_acq(n_frames=1)
    data = ChannelData(samples=np.zeros((1, 3, 16, 256)), config=acq)
    with pytest.raises(EmptySubapertureError):
        delay_and_gather(data, 0, 0, (5e-3, 1e-4))


def _naive_beamform(data: ChannelData, grid: BeamGrid, bf: BeamformConfig) -> np.ndarray:
    """Per pixel, per angle, per element loop with its own delays, weights and interpolation."""
    cfg = data.config
    c, fs, ns = cfg.speed_of_sound, cfg.sampling_freq, cfg.n_samples
    n_el = cfg.geometry.element_count
    ex = [(i - (n_el - 1) / 2) * cfg.geometry.pitch for i in range(n_el)]
    out = np.zeros((4, cfg.n_frames, grid.nz, grid.nx))
    for f in range(cfg.n_frames):
        for iz in range(grid.nz):
            z = grid.z0 + iz * grid.dz
            for ix in range(grid.nx):
                x = grid.x0 + ix * grid.dx
                members = [i for i in range(n_el) if abs(ex[i] - x) <= z / (2 * bf.f_number)]
                n = len(members)
                zm = [1.0] * (n // 2) + [0.0] * (n % 2) + [-1.0] * (n // 2)
                for a, theta in enumerate(cfg.steering_angles):
                    for k, i in enumerate(members):
                        tau = (z * math.cos(theta) + x * math.sin(theta)) / c + math.hypot(x - ex[i], z) / c
                        d = tau * fs
                        trace = data.samples[f, a, i]
                        if bf.interpolation == "nearest":
                            j = math.floor(d + 0.5)
                            v = trace[j] if 0 <= j <= ns - 1 else 0.0
                        elif 0 <= d <= ns - 1:
                            j = min(math.floor(d), ns - 2)
                            v = trace[j] * (1 - (d - j)) + trace[j + 1] * (d - j)
                        else:
                            v = 0.0
                        out[ZM, f, iz, ix] += zm[k] * v
                        out[DC1, f, iz, ix] += (zm[k] + bf.dc_offset) * v
                        out[DC2, f, iz, ix] += (-zm[k] + bf.dc_offset) * v
                        out[RECT, f, iz, ix] += v
    return out


@pytest.mark.parametrize("interpolation", ["linear", "nearest"])
@pytest.mark.parametrize("z0", [20 * 3.08e-4, 0.6e-3])
def test_matches_naive_beamformer(rng, interpolation, z0):
    acq = make_acq(n_frames=2)
    data = ChannelData(samples=rng.standard_normal((2, 3, 16, 256)), config=acq)
    grid = make_grid(nz=6, nx=9, z0=z0)
    bf = BeamformConfig(interpolation=interpolation)
    fast = beamform_all(data, grid, bf, row_block=4).rf
    slow = _naive_beamform(data, grid, bf)
    assert np.max(np.abs(fast - slow)) <= 1e-6 * np.max(np.abs(slow))


def test_point_scatterer_focus_and_null(grid):
    acq = make_acq(n_frames=1)
    iz, ix = 16, 8
    phantom = Phantom(points=[PointScatterer(x=float(grid.x[ix]), z=float(grid.z[iz]))],
                      region=Region.from_grid(grid))
    img = beamform_frame(simulate(phantom, acq), 0, grid)
    rect = np.abs(img[RECT])
    pz, px = np.unravel_index(np.argmax(rect), rect.shape)
    assert abs(pz - iz) <= 1 and abs(px - ix) <= 1
    assert abs(img[ZM, iz, ix]) <= 0.05 * rect.max()


def test_dc_linearity(grid, rng):
    data = ChannelData(samples=rng.standard_normal((1, 3, 16, 256)), config=make_acq(n_frames=1))
    img = beamform_frame(data, 0, grid)
    np.testing.assert_allclose(img[DC1] + img[DC2], 0.64 * img[RECT], rtol=1e-9, atol=1e-12 * np.abs(img).max())


def test_frame_permutation_commutes(rng):
    acq = make_acq(n_frames=3)
    samples = rng.standard_normal((3, 3, 16, 256))
    grid = make_grid(nz=4, nx=5)
    order = [2, 0, 1]
    a = beamform_all(ChannelData(samples=samples, config=acq), grid).rf
    b = beamform_all(ChannelData(samples=samples[order], config=acq), grid).rf
    np.testing.assert_array_equal(b, a[:, order])


def test_single_frame_stack(rng):
    acq = make_acq(n_frames=1)
    stack = beamform_all(ChannelData(samples=rng.standard_normal((1, 3, 16, 256)), config=acq), make_grid(nz=4))
    assert stack.rf.shape == (4, 1, 4, 17)


def test_worker_count_does_not_change_bits(rng):
    acq = make_acq(n_frames=2)
    data = ChannelData(samples=rng.standard_normal((2, 3, 16, 256)), config=acq)
    grid = make_grid(nz=10)
    a = beamform_all(data, grid, workers=1, row_block=3).rf
    b = beamform_all(data, grid, workers=4, row_block=3).rf
    np.testing.assert_array_equal(a, b)


def test_grid_deeper_than_record_rejected():
    acq = make_acq(n_frames=1, n_samples=64)
    data = ChannelData(samples=np.zeros((1, 3, 16, 64)), config=acq)
    with pytest.raises(PreconditionError):
        beamform_frame(data, 0, make_grid())


def test_frame_index_checked(rng):
    acq = make_acq(n_frames=1)
    data = ChannelData(samples=np.zeros((1, 3, 16, 256)), config=acq)
    with pytest.raises(PreconditionError):
        beamform_frame(data, 1, make_grid(nz=2))


def test_output_is_linear_in_channel_data(rng):
    acq = make_acq(n_frames=2)
    grid = make_grid(nz=6, nx=7)
    d1 = rng.standard_normal((2, 3, 16, 256))
    d2 = rng.standard_normal((2, 3, 16, 256))
    a, b = 1.7, -0.4
    mixed = beamform_all(ChannelData(samples=a * d1 + b * d2, config=acq), grid).rf
    parts = (a * beamform_all(ChannelData(samples=d1, config=acq), grid).rf
             + b * beamform_all(ChannelData(samples=d2, config=acq), grid).rf)
    assert np.max(np.abs(mixed - parts)) <= 1e-9 * np.max(np.abs(parts))


def _desk_window(nz: int = 24):
    """mouse30_desk restricted to nz rows around the middle of its depth window."""
    p = get_preset("mouse30_desk")
    g = p.grid
    top = g.nz // 2 - nz // 2
    grid = g.model_copy(update={"z0": g.z0 + top * g.dz, "nz": nz})
    return p, grid


def _rect_column_peak(p, grid, x: float, z: float) -> int:
    acq = p.acquisition.model_copy(update={"n_frames": 1})
    phantom = Phantom(points=[PointScatterer(x=x, z=z)], region=Region.from_grid(grid))
    img = beamform_frame(simulate(phantom, acq), 0, grid, p.beamform)
    return int(np.argmax(np.abs(img[RECT]).max(axis=0)))


@pytest.mark.parametrize("shift", [3, -7])
def test_lateral_shift_moves_rect_peak(shift):
    p, grid = _desk_window()
    ix = grid.nx // 2
    z = float(grid.z[grid.nz // 2])
    base = _rect_column_peak(p, grid, float(grid.x[ix]), z)
    moved = _rect_column_peak(p, grid, float(grid.x[ix + shift]), z)
    assert abs(base - ix) <= 1
    assert abs((moved - base) - shift) <= 1


def test_compounding_does_not_lose_on_axis_gain(grid):
    iz, ix = 16, 8
    phantom = Phantom(points=[PointScatterer(x=float(grid.x[ix]), z=float(grid.z[iz]))],
                      region=Region.from_grid(grid))
    single = make_acq(n_frames=1, steering_angles=(0.0,))
    fan = make_acq(n_frames=1, steering_angles=(-0.1, -0.05, 0.0, 0.05, 0.1))
    one = abs(beamform_frame(simulate(phantom, single), 0, grid)[RECT, iz, ix])
    many = abs(beamform_frame(simulate(phantom, fan), 0, grid)[RECT, iz, ix])
    assert one > 0.0
    assert many >= one


@pytest.mark.parametrize("interpolation", ["linear", "nearest"])
def test_matches_naive_beamformer_on_desk_preset(rng, interpolation):
    p = get_preset("mouse30_desk")
    acq = p.acquisition.model_copy(update={"n_frames": 8})
    assert (acq.geometry.element_count, acq.n_angles) == (64, 9)
    samples = rng.standard_normal((8, acq.n_angles, 64, acq.n_samples))
    data = ChannelData(samples=samples, config=acq)
    g = p.grid
    grid = g.model_copy(update={"dx": g.dx * 20, "dz": g.dz * 37, "nx": 5, "nz": 4,
                                "x0": g.x0 + g.dx * (g.nx // 2 - 40)})
    bf = p.beamform.model_copy(update={"interpolation": interpolation})
    fast = beamform_all(data, grid, bf, row_block=3).rf
    slow = _naive_beamform(data, grid, bf)
    assert np.max(np.abs(fast - slow)) <= 1e-6 * np.max(np.abs(slow))
