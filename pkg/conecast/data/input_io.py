"""
Input file decoding: IDX (MNIST-style), CSV, raw float32 and PNG images.
"""
import gzip
import struct
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Tuple, Union

import numpy as np
from PIL import Image

from conecast.errors import InputFormatError
from conecast.models.network import Shape3

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
INPUT_FORMATS = ("idx", "csv", "raw32", "png")


@dataclass(frozen=True)
class InputFile:
    """A decoded input: values are float32 with the given (H, W, C) shape."""

    format: str
    shape: Shape3
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.size != int(np.prod(self.shape)):
            raise InputFormatError(f"{self.values.size} values do not fill shape {self.shape}")


def _open_binary(path: PathLike) -> BinaryIO:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx_header(handle: BinaryIO, path: PathLike) -> Tuple[int, Tuple[int, ...]]:
    # Data format (big endian):
    # i32 | Magic (0x00000803 images, 0x00000801 labels)
    # i32 | Item count
    # i32 | Row count, i32 | Column count (images only)
    # u8[] | Values, row-wise
    header = handle.read(4)
    if len(header) != 4:
        raise InputFormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", header)
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise InputFormatError(f"{path}: unsupported IDX magic 0x{magic:08x}")
    dims = magic & 0xFF
    raw = handle.read(4 * dims)
    if len(raw) != 4 * dims:
        raise InputFormatError(f"{path}: truncated IDX dimensions")
    return magic, struct.unpack(f">{dims}I", raw)


def read_idx_images(path: PathLike) -> np.ndarray:
    """
    Read every image of an IDX ubyte image file.

    Args:
        path: IDX file (optionally .gz)

    Returns:
        float32 array (N, rows, cols, 1) scaled to [0, 1] by /255
    """
    with _open_binary(path) as handle:
        magic, dims = _read_idx_header(handle, path)
        if magic != IDX_IMAGES_MAGIC:
            raise InputFormatError(f"{path}: IDX label file given where images were expected")
        count, rows, cols = dims
        data = handle.read()
    if len(data) != count * rows * cols:
        raise InputFormatError(f"{path}: expected {count * rows * cols} pixels, found {len(data)}")
    images = np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols, 1)
    logger.info(f"Read {count} images of {rows}x{cols} from {path}")
    return (images.astype(np.float32) / np.float32(255.0))


def read_idx_labels(path: PathLike) -> np.ndarray:
    """Read an IDX ubyte label file as a uint8 vector."""
    with _open_binary(path) as handle:
        magic, dims = _read_idx_header(handle, path)
        if magic != IDX_LABELS_MAGIC:
            raise InputFormatError(f"{path}: IDX image file given where labels were expected")
        (count,) = dims
        data = handle.read()
    if len(data) != count:
        raise InputFormatError(f"{path}: expected {count} labels, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).copy()


def read_csv(path: PathLike, shape: Shape3) -> np.ndarray:
    """CSV with one line per row holding W*C values ('.' decimal, '#' comments)."""
    try:
        values = np.loadtxt(path, delimiter=",", comments="#", dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise InputFormatError(f"{path}: {e}") from e
    if values.size != int(np.prod(shape)):
        raise InputFormatError(f"{path}: {values.size} values, expected {int(np.prod(shape))} for {shape}")
    return values.astype(np.float32).reshape(shape)


def read_raw32(path: PathLike, shape: Shape3) -> np.ndarray:
    """Raw little-endian float32 values in (row, col, channel) order."""
    values = np.fromfile(path, dtype="<f4")
    if values.size != int(np.prod(shape)):
        raise InputFormatError(f"{path}: {values.size} values, expected {int(np.prod(shape))} for {shape}")
    return values.astype(np.float32).reshape(shape)


def read_png(path: PathLike, shape: Shape3) -> np.ndarray:
    """Greyscale (C=1) or RGB (C=3) image scaled to [0, 1]."""
    channels = shape[2]
    if channels not in (1, 3):
        raise InputFormatError(f"PNG input needs 1 or 3 channels, model expects {channels}")
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("L" if channels == 1 else "RGB"), dtype=np.float32)
    except (OSError, ValueError) as e:
        raise InputFormatError(f"{path}: {e}") from e
    pixels = pixels.reshape(pixels.shape[0], pixels.shape[1], channels) / np.float32(255.0)
    if pixels.shape != tuple(shape):
        raise InputFormatError(f"{path}: image is {pixels.shape}, model expects {tuple(shape)}")
    return pixels


def read_input(path: PathLike, fmt: str, shape: Shape3, index: int = 0) -> InputFile:
    """
    Decode an input file for a model with input shape `shape`.

    Args:
        path: Input file
        fmt: idx, csv, raw32 or png
        shape: Expected (H, W, C)
        index: Image index inside an IDX file

    Returns:
        InputFile with float32 values

    Raises:
        InputFormatError: undecodable file or wrong shape
    """
    if fmt == "idx":
        images = read_idx_images(path)
        if not 0 <= index < len(images):
            raise InputFormatError(f"{path}: image index {index} out of range (0..{len(images) - 1})")
        values = images[index]
        if values.shape != tuple(shape):
            raise InputFormatError(f"{path}: image is {values.shape}, model expects {tuple(shape)}")
    elif fmt == "csv":
        values = read_csv(path, shape)
    elif fmt == "raw32":
        values = read_raw32(path, shape)
    elif fmt == "png":
        values = read_png(path, shape)
    else:
        raise InputFormatError(f"unknown input format {fmt!r}; expected one of {INPUT_FORMATS}")
    return InputFile(format=fmt, shape=tuple(shape), values=values)


def write_raw32(path: PathLike, values: np.ndarray) -> None:
    Path(path).write_bytes(np.asarray(values, dtype="<f4").tobytes())


def write_csv(path: PathLike, values: np.ndarray) -> None:
    """One line per row, W*C values each, fixed '.'-decimal formatting."""
    array = np.asarray(values, dtype=np.float32)
    rows = array.reshape(array.shape[0], -1)
    lines = [",".join(repr(float(v)) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
