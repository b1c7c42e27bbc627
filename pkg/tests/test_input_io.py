import gzip
import struct

import numpy as np
import pytest
from PIL import Image

from conecast.data.input_io import (
    read_idx_images,
    read_idx_labels,
    read_input,
    write_csv,
    write_raw32,
)
from conecast.errors import InputFormatError


def _idx_images(images: np.ndarray) -> bytes:
    count, rows, cols = images.shape
    return struct.pack(">IIII", 0x803, count, rows, cols) + images.astype(np.uint8).tobytes()


@pytest.fixture
def images():
    rng = np.random.Generator(np.random.Philox(0))
    return rng.integers(0, 256, size=(3, 5, 4)).astype(np.uint8)


def test_idx_images_scaled(tmp_path, images):
    path = tmp_path / "images.idx"
    path.write_bytes(_idx_images(images))
    decoded = read_idx_images(path)
    assert decoded.shape == (3, 5, 4, 1)
    assert decoded.dtype == np.float32
    np.testing.assert_allclose(decoded[..., 0], images / 255.0, rtol=1e-6)


def test_idx_gzip_and_index(tmp_path, images):
    path = tmp_path / "images.idx.gz"
    with gzip.open(path, "wb") as handle:
        handle.write(_idx_images(images))
    decoded = read_input(path, "idx", (5, 4, 1), index=2)
    np.testing.assert_allclose(decoded.values[..., 0], images[2] / 255.0, rtol=1e-6)
    with pytest.raises(InputFormatError):
        read_input(path, "idx", (5, 4, 1), index=3)
    with pytest.raises(InputFormatError):
        read_input(path, "idx", (4, 5, 1))


def test_idx_labels(tmp_path):
    path = tmp_path / "labels.idx"
    path.write_bytes(struct.pack(">II", 0x801, 4) + bytes([7, 2, 1, 0]))
    assert read_idx_labels(path).tolist() == [7, 2, 1, 0]
    with pytest.raises(InputFormatError):
        read_idx_images(path)


def test_idx_rejects_bad_files(tmp_path, images):
    path = tmp_path / "bad.idx"
    path.write_bytes(struct.pack(">I", 0x0D03) + b"\0" * 12)
    with pytest.raises(InputFormatError):
        read_idx_images(path)
    path.write_bytes(_idx_images(images)[:-1])
    with pytest.raises(InputFormatError):
        read_idx_images(path)


def test_csv_round_trip(tmp_path):
    values = np.random.Generator(np.random.Philox(1)).random((3, 4, 2)).astype(np.float32)
    path = tmp_path / "input.csv"
    write_csv(path, values)
    assert len(path.read_text().splitlines()) == 3
    np.testing.assert_array_equal(read_input(path, "csv", (3, 4, 2)).values, values)


def test_raw32(tmp_path):
    values = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    path = tmp_path / "input.raw"
    write_raw32(path, values)
    assert path.stat().st_size == 48
    np.testing.assert_array_equal(read_input(path, "raw32", (2, 3, 2)).values, values)
    with pytest.raises(InputFormatError):
        read_input(path, "raw32", (2, 3, 1))


def test_png_greyscale_and_rgb(tmp_path):
    grey = np.array([[0, 255], [51, 102]], dtype=np.uint8)
    path = tmp_path / "grey.png"
    Image.fromarray(grey).save(path)
    decoded = read_input(path, "png", (2, 2, 1))
    np.testing.assert_allclose(decoded.values[..., 0], grey / 255.0, rtol=1e-6)

    rgb = np.zeros((2, 3, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    path = tmp_path / "rgb.png"
    Image.fromarray(rgb).save(path)
    assert read_input(path, "png", (2, 3, 3)).values[0, 0].tolist() == [1.0, 0.0, 0.0]
    with pytest.raises(InputFormatError):
        read_input(path, "png", (3, 2, 3))


def test_unknown_format(tmp_path):
    with pytest.raises(InputFormatError):
        read_input(tmp_path / "x", "jpeg", (1, 1, 1))

