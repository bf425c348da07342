import numpy as np
import pytest

from nftrack.core import GrayImage
from nftrack.errors import InvalidInputError
from nftrack.imageio import load_image, load_pgm, load_png, save_pgm


def test_pgm_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    img = GrayImage(rng.integers(0, 256, (37, 53), dtype=np.uint8))
    path = tmp_path / "fixture.pgm"
    save_pgm(img, path)
    assert load_pgm(path) == img


def test_pgm_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    raster = bytes(range(6))
    path.write_bytes(b"P5\n# a comment\n3 # inline\n2\n255\n" + raster)
    img = load_pgm(path)
    assert img.size == (3, 2)
    assert img.data.tobytes() == raster


def test_pgm_rejects_wrong_magic_and_maxval(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n2 2\n255\n" + b"\x00" * 4)
    with pytest.raises(InvalidInputError):
        load_pgm(p)
    p.write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
    with pytest.raises(InvalidInputError):
        load_pgm(p)


def test_pgm_truncated_raster(tmp_path):
    p = tmp_path / "short.pgm"
    p.write_bytes(b"P5\n4 4\n255\n" + b"\x00" * 7)
    with pytest.raises(InvalidInputError):
        load_pgm(p)


def test_png_gray_and_rgba(tmp_path):
    PIL = pytest.importorskip("PIL.Image")
    rng = np.random.default_rng(2)
    gray = rng.integers(0, 256, (9, 12), dtype=np.uint8)
    gp = tmp_path / "g.png"
    PIL.fromarray(gray, mode="L").save(gp)
    assert np.array_equal(load_png(gp).pixels, gray)

    rgba = np.zeros((4, 4, 4), dtype=np.uint8)
    rgba[..., 0] = 100
    rgba[..., 1] = 200
    rgba[..., 2] = 50
    rgba[..., 3] = 255
    cp = tmp_path / "c.png"
    PIL.fromarray(rgba, mode="RGBA").save(cp)
    assert np.all(load_png(cp).pixels == 153)  # BT.601 of (100,200,50)


def test_load_image_dispatch(tmp_path):
    img = GrayImage(np.zeros((3, 3), dtype=np.uint8))
    p = tmp_path / "x.pgm"
    save_pgm(img, p)
    assert load_image(p) == img
    with pytest.raises(InvalidInputError):
        load_image(tmp_path / "x.bmp")
