import hashlib

import numpy as np
import pytest

from glvr.image import decode_ppm, encode_ppm, load_ppm, save_image
from glvr.metrics import ImageBuffer


def test_ppm_bytes_exact():
    img = ImageBuffer(np.array([[[1.0, 0.0, 0.5], [0.0, 1.0, 0.0]]]))
    assert encode_ppm(img) == b"P6\n2 1\n255\n" + bytes([255, 0, 128, 0, 255, 0])


def test_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = ImageBuffer(rng.uniform(size=(5, 7, 3)))
    save_image(img, tmp_path / "x.ppm")
    np.testing.assert_array_equal(load_ppm(tmp_path / "x.ppm"), img.to_bytes())


def test_decode_with_comment():
    data = b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03"
    np.testing.assert_array_equal(decode_ppm(data), [[[1, 2, 3]]])


def test_decode_rejects_p3():
    with pytest.raises(ValueError):
        decode_ppm(b"P3\n1 1\n255\n1 2 3\n")


def test_png(tmp_path):
    pytest.importorskip("PIL")
    from PIL import Image

    img = ImageBuffer(np.random.default_rng(1).uniform(size=(4, 3, 3)))
    save_image(img, tmp_path / "x.png")
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "x.png")), img.to_bytes())


def test_unknown_extension(tmp_path):
    with pytest.raises(ValueError, match="extension"):
        save_image(ImageBuffer.filled(1, 1, (0, 0, 0)), tmp_path / "x.bmp")
