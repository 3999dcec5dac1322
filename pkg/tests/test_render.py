import numpy as np
import pytest

from psikit.errors import InputValidationError
from psikit.phasemap import PhaseImage
from psikit.render import encode_pgm, encode_ppm, render


def _image(values) -> PhaseImage:
    return PhaseImage(values=np.asarray(values, dtype=np.float64), kind="psi", n_pairs=1)


def _read_pgm(blob: bytes):
    parts = blob.split(b"\n", 3)
    assert parts[0] == b"P5"
    nx, nz = (int(v) for v in parts[1].split())
    assert parts[2] == b"65535"
    return np.frombuffer(parts[3], dtype=">u2").reshape(nz, nx)


def test_ppm_colors():
    blob, peak = encode_ppm(_image([[0.0, 2.0], [-2.0, 0.0]]))
    assert peak == 2.0
    header = b"P6\n2 2\n255\n"
    assert blob.startswith(header)
    rgb = np.frombuffer(blob[len(header):], dtype=np.uint8).reshape(2, 2, 3)
    np.testing.assert_array_equal(rgb[0, 0], [0, 0, 0])
    np.testing.assert_array_equal(rgb[0, 1], [255, 0, 0])
    np.testing.assert_array_equal(rgb[1, 0], [0, 0, 255])
    np.testing.assert_array_equal(rgb[1, 1], [0, 0, 0])


def test_pgm_preserves_pixel_order():
    values = np.arange(12, dtype=np.float64).reshape(3, 4) - 5.0
    blob, peak = encode_pgm(_image(values))
    pixels = _read_pgm(blob)
    assert peak == 6.0
    assert pixels.shape == (3, 4)
    np.testing.assert_array_equal(pixels, np.rint(np.abs(values) / 6.0 * 65535))


def test_rescale_invariant():
    values = np.linspace(-1.0, 3.0, 20).reshape(4, 5)
    assert encode_pgm(_image(values))[0] == encode_pgm(_image(values * 0.25))[0]
    assert encode_ppm(_image(values))[0] == encode_ppm(_image(values * 0.25))[0]


def test_zero_image_renders_black():
    blob, peak = encode_ppm(_image(np.zeros((2, 3))))
    assert peak == 0.0
    assert set(blob[len(b"P6\n3 2\n255\n"):]) == {0}


def test_nan_rejected(tmp_path):
    with pytest.raises(InputValidationError):
        render(_image([[0.0, np.nan]]), tmp_path / "x.pgm")


def test_render_writes_file(tmp_path):
    path = tmp_path / "psi.ppm"
    assert render(_image([[1.0, -4.0]]), path, style="color") == 4.0
    assert path.read_bytes().startswith(b"P6\n")
