import numpy as np
import orjson
import pytest

from psikit import logging_utils
from psikit.beamform import BeamformedStack, beamform_all
from psikit.errors import PreconditionError
from psikit.iqfilter import (
    FilteredIQStack,
    IQStack,
    build_casorati,
    casorati_to_frames,
    iq_demodulate,
    retained_range,
    svd_clutter_filter,
)
from psikit.models import BeamformConfig, BeamGrid
from psikit.phantom import builtin_phantom, simulate
from psikit.presets import get_preset

from conftest import C, FC, make_acq, make_grid


def _iq(arr, acq, grid) -> IQStack:
    return IQStack(iq=arr, grid=grid, config=acq, beamform_config=BeamformConfig(), decim=1, demod_freq=FC)


def test_tone_at_demod_frequency_becomes_constant_phase():
    lam = C / FC
    grid = BeamGrid(x0=0.0, z0=20 * lam, dx=lam, dz=lam / 16, nx=2, nz=256)
    acq = make_acq(n_frames=1)
    tone = np.cos(2 * np.pi * FC * 2 * grid.z / C)
    rf = np.broadcast_to(tone[None, None, :, None], (4, 1, grid.nz, grid.nx)).copy()
    out = iq_demodulate(BeamformedStack(rf=rf, grid=grid, config=acq, beamform_config=BeamformConfig()), decim=4)
    assert out.grid.nz == 64
    assert out.grid.dz == pytest.approx(lam / 4)
    core = out.iq[0, 0, 10:-10, 0]
    assert np.ptp(np.angle(core)) < 0.01
    np.testing.assert_allclose(np.abs(core), 1.0, rtol=0.01)


def test_decimation_sizes(random_beamformed):
    assert iq_demodulate(random_beamformed, decim=1).iq.shape[2] == random_beamformed.grid.nz
    small = BeamformedStack(rf=random_beamformed.rf[:, :, :10], grid=make_grid(nz=10),
                            config=random_beamformed.config, beamform_config=BeamformConfig())
    assert iq_demodulate(small, decim=3).iq.shape[2] == 4
    with pytest.raises(PreconditionError):
        iq_demodulate(small, decim=11)


def test_casorati_layout():
    acq = make_acq(n_frames=3)
    grid = make_grid(nz=1, nx=2)
    iq = np.zeros((4, 3, 1, 2), dtype=complex)
    iq[0, :, 0, 0] = [1, 2, 3]
    iq[0, :, 0, 1] = [4, 5, 6]
    m = build_casorati(_iq(iq, acq, grid), 0)
    np.testing.assert_array_equal(m, [[1, 2, 3], [4, 5, 6]])
    np.testing.assert_array_equal(casorati_to_frames(m, (1, 2)), iq[0])


def test_casorati_column_norms_are_frame_energies(random_filtered):
    m = build_casorati(random_filtered, 2)
    energy = (np.abs(random_filtered.iq[2]) ** 2).sum(axis=(1, 2))
    np.testing.assert_allclose((np.abs(m) ** 2).sum(axis=0), energy)


def test_retained_range():
    assert retained_range(20, 0.1, 0.1) == (2, 18)
    assert retained_range(8, 0.1, 0.1) == (0, 8)
    with pytest.raises(PreconditionError):
        retained_range(2, 0.5, 0.5)


def test_zero_fractions_reconstruct_input(random_filtered):
    iq = _iq(random_filtered.iq, random_filtered.config, random_filtered.grid)
    out = svd_clutter_filter(iq, 0.0, 0.0)
    np.testing.assert_allclose(out.iq, iq.iq, rtol=1e-6, atol=1e-9)
    assert (out.lo, out.hi) == (0, 8)


def test_filter_is_idempotent(rng):
    acq = make_acq(n_frames=20)
    grid = make_grid(nz=5, nx=6)
    shape = (4, 20, 5, 6)
    iq = _iq(rng.standard_normal(shape) + 1j * rng.standard_normal(shape), acq, grid)
    once = svd_clutter_filter(iq, 0.1, 0.1)
    twice = svd_clutter_filter(once, 0.1, 0.1)
    assert isinstance(twice, FilteredIQStack)
    np.testing.assert_allclose(twice.iq, once.iq, rtol=1e-6, atol=1e-9 * np.abs(once.iq).max())


def test_static_tissue_suppressed(rng):
    nf, nz, nx = 20, 6, 8
    acq = make_acq(n_frames=nf)
    grid = make_grid(nz=nz, nx=nx)
    static = 31.6 * (rng.standard_normal((nz, nx)) + 1j * rng.standard_normal((nz, nx)))
    blood_mask = np.zeros((nz, nx), dtype=bool)
    blood_mask[:, 3:5] = True
    omega = rng.uniform(0.3, 1.5, (nz, nx))
    n = np.arange(nf)[:, None, None]
    frames = np.where(blood_mask, np.exp(1j * omega * n), static[None])
    iq = _iq(np.broadcast_to(frames, (4, nf, nz, nx)).copy(), acq, grid)
    out = svd_clutter_filter(iq, 0.1, 0.1)
    tissue = ~blood_mask
    before = (np.abs(iq.iq[0][:, tissue]) ** 2).sum()
    after = (np.abs(out.iq[0][:, tissue]) ** 2).sum()
    assert 10 * np.log10(after / before) <= -20.0


def test_too_few_frames(rng):
    acq = make_acq(n_frames=2)
    iq = _iq(np.ones((4, 2, 3, 3), dtype=complex), acq, make_grid(nz=3, nx=3))
    with pytest.raises(PreconditionError):
        svd_clutter_filter(iq)


def test_workers_do_not_change_result(random_filtered):
    iq = _iq(random_filtered.iq, random_filtered.config, random_filtered.grid)
    a = svd_clutter_filter(iq, 0.1, 0.1, workers=1)
    b = svd_clutter_filter(iq, 0.1, 0.1, workers=4)
    np.testing.assert_array_equal(a.iq, b.iq)


def _complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_kept_and_rejected_parts_split_the_energy(rng):
    acq = make_acq(n_frames=10)
    grid = make_grid(nz=3, nx=4)
    iq = _iq(_complex(rng, (4, 10, 3, 4)), acq, grid)
    filtered = svd_clutter_filter(iq, 0.1, 0.1)
    assert (filtered.lo, filtered.hi) == (1, 9)
    for apod in range(4):
        m = build_casorati(iq, apod)
        kept = build_casorati(filtered, apod)
        rejected = m - kept
        scale = np.linalg.norm(m) ** 2
        assert np.abs(kept.conj().T @ rejected).max() < 1e-9 * scale
        assert np.linalg.norm(kept) ** 2 + np.linalg.norm(rejected) ** 2 == pytest.approx(scale, rel=1e-10)
        assert np.linalg.matrix_rank(rejected) == 2


def test_filter_commutes_with_complex_scaling(rng):
    acq = make_acq(n_frames=10)
    grid = make_grid(nz=3, nx=4)
    arr = _complex(rng, (4, 10, 3, 4))
    c = 2.5 * np.exp(0.7j)
    base = svd_clutter_filter(_iq(arr, acq, grid), 0.1, 0.1).iq
    scaled = svd_clutter_filter(_iq(c * arr, acq, grid), 0.1, 0.1).iq
    np.testing.assert_allclose(scaled, c * base, atol=1e-9 * np.abs(c * base).max())


def test_desk_tissue_away_from_vessel_drops_20_db():
    preset = get_preset("mouse50_desk")
    acq = preset.acquisition.model_copy(update={"n_frames": 10})
    grid = preset.grid
    phantom = builtin_phantom("single_vessel", grid, acq, seed=3)
    iq = iq_demodulate(beamform_all(simulate(phantom, acq), grid, preset.beamform), decim=preset.decimation)
    filtered = svd_clutter_filter(iq)
    assert (filtered.lo, filtered.hi) == (1, 9)
    x_mid = grid.x0 + grid.dx * (grid.nx - 1) / 2
    far = np.abs(iq.grid.x - x_mid) >= 2 * acq.wavelength
    mask = iq.coverage() & far[None, :]
    assert mask.sum() > 100
    for apod in range(4):
        before = np.sum(np.abs(iq.iq[apod][:, mask]) ** 2)
        after = np.sum(np.abs(filtered.iq[apod][:, mask]) ** 2)
        assert 10 * np.log10(before / after) >= 20.0


def test_singular_spectrum_logged_at_debug(random_filtered, monkeypatch, capsys):
    monkeypatch.setattr(logging_utils, "MIN_LEVEL", 10)
    monkeypatch.setattr(logging_utils, "JSON_ENABLED", True)
    svd_clutter_filter(random_filtered, 0.0, 0.0)
    records = [orjson.loads(line) for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    spectra = [r for r in records if r["event"] == "svd_spectrum"]
    assert [r["apod"] for r in spectra] == ["zm", "dc1", "dc2", "rect"]
    assert all(r["level"] == "DEBUG" and r["kept_energy"] == pytest.approx(1.0) for r in spectra)
