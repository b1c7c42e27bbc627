"""
Seeded network and input generators.

Every generator draws from numpy's Philox4x64 counter-based bit generator, so a
seed reproduces the same float32 weights on any platform.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from conecast.errors import InfeasibleShape
from conecast.models.network import (
    Activation,
    LayerKind,
    LayerSpec,
    NetworkSpec,
    Padding,
    Shape3,
    conv_output_size,
    validate,
)

# Configure logging
logger = logging.getLogger(__name__)

HEAD_CHOICES = ("global_average", "global_average_dense", "dense", "none")
_ACTIVATIONS: Tuple[Activation, ...] = (Activation.RELU, Activation.TANH, Activation.IDENTITY)


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator for a seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _uniform_weights(rng: np.random.Generator, count: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    return rng.uniform(low, high, size=count).astype(np.float32)


def _check_range(name: str, bounds: Sequence[int]) -> Tuple[int, int]:
    low, high = int(bounds[0]), int(bounds[1])
    if low < 1 or low > high:
        raise InfeasibleShape(f"{name} must satisfy 1 <= low <= high, got {tuple(bounds)}")
    return low, high


def conv_layer(
    weights: np.ndarray,
    activation: Activation = Activation.IDENTITY,
    stride: Tuple[int, int] = (1, 1),
    padding: Padding = Padding.VALID,
    bias: Optional[np.ndarray] = None,
) -> LayerSpec:
    """
    Build a conv LayerSpec from a [out][in][kh][kw] weight array.

    Args:
        weights: Four-dimensional weight array
        activation: Layer non-linearity
        stride: (sh, sw)
        padding: valid or same
        bias: Optional bias vector (zeros when omitted)

    Returns:
        The layer spec
    """
    weights = np.asarray(weights, dtype=np.float32)
    out_ch, in_ch, kh, kw = weights.shape
    return LayerSpec(
        kind=LayerKind.CONV,
        in_channels=in_ch,
        out_channels=out_ch,
        activation=activation,
        kernel=(kh, kw),
        stride=stride,
        padding=padding,
        weights=weights.ravel(),
        bias=np.zeros(out_ch, dtype=np.float32) if bias is None else bias,
    )


def dense_layer(weights: np.ndarray, activation: Activation = Activation.IDENTITY, bias: Optional[np.ndarray] = None) -> LayerSpec:
    """Build a dense LayerSpec from an [out][in] weight array."""
    weights = np.asarray(weights, dtype=np.float32)
    out_size, in_size = weights.shape
    return LayerSpec(
        kind=LayerKind.DENSE,
        in_channels=in_size,
        out_channels=out_size,
        activation=activation,
        weights=weights.ravel(),
        bias=np.zeros(out_size, dtype=np.float32) if bias is None else bias,
    )


def global_average_layer() -> LayerSpec:
    return LayerSpec(kind=LayerKind.GLOBAL_AVERAGE)


def random_network(
    seed: int,
    depth: int,
    width_range: Sequence[int] = (4, 16),
    channel_range: Sequence[int] = (1, 8),
    activation: Optional[Activation] = None,
    head: str = "global_average",
    height_range: Optional[Sequence[int]] = None,
    outputs: Optional[int] = None,
    allow_stride: bool = True,
) -> NetworkSpec:
    """
    Generate a random zero-bias convolutional network.

    Args:
        seed: Generator seed; equal seeds give bitwise-identical specs
        depth: Number of conv layers (>= 1)
        width_range: Inclusive bounds for the input width
        channel_range: Inclusive bounds for every channel count
        activation: Activation for every layer, or None to draw relu/tanh/identity per layer
        head: One of global_average, global_average_dense, dense, none
        height_range: Inclusive bounds for the input height (defaults to width_range)
        outputs: Dense head size (drawn from channel_range when None)
        allow_stride: Allow occasional stride-2 layers

    Returns:
        Validated NetworkSpec with weights uniform in [-1, 1]

    Raises:
        InfeasibleShape: depth or ranges cannot produce a network
    """
    if depth < 1:
        raise InfeasibleShape(f"depth must be >= 1, got {depth}")
    if head not in HEAD_CHOICES:
        raise InfeasibleShape(f"unknown head {head!r}; expected one of {HEAD_CHOICES}")
    w_lo, w_hi = _check_range("width_range", width_range)
    h_lo, h_hi = _check_range("height_range", height_range if height_range is not None else width_range)
    c_lo, c_hi = _check_range("channel_range", channel_range)

    rng = make_rng(seed)
    rows = int(rng.integers(h_lo, h_hi + 1))
    cols = int(rng.integers(w_lo, w_hi + 1))
    channels = int(rng.integers(c_lo, c_hi + 1))
    input_shape: Shape3 = (rows, cols, channels)

    def draw_activation() -> Activation:
        choice = int(rng.integers(0, len(_ACTIVATIONS)))
        return activation if activation is not None else _ACTIVATIONS[choice]

    layers: List[LayerSpec] = []
    for _ in range(depth):
        kh = 1 if rows == 1 else int(rng.integers(1, 4))
        kw = int(rng.integers(1, 4))
        sh = 2 if allow_stride and rows >= 4 and rng.random() < 0.2 else 1
        sw = 2 if allow_stride and cols >= 4 and rng.random() < 0.2 else 1
        padding = Padding.SAME if rng.random() < 0.5 else Padding.VALID
        if padding == Padding.VALID and (
            conv_output_size(rows, kh, sh, padding) < 1 or conv_output_size(cols, kw, sw, padding) < 1
        ):
            padding = Padding.SAME
        out_ch = int(rng.integers(c_lo, c_hi + 1))
        act = draw_activation()
        weights = _uniform_weights(rng, out_ch * channels * kh * kw).reshape(out_ch, channels, kh, kw)
        layers.append(conv_layer(weights, activation=act, stride=(sh, sw), padding=padding))
        rows = conv_output_size(rows, kh, sh, padding)
        cols = conv_output_size(cols, kw, sw, padding)
        channels = out_ch

    if head != "none":
        size = outputs if outputs is not None else int(rng.integers(c_lo, c_hi + 1))
        if head in ("global_average", "global_average_dense"):
            layers.append(global_average_layer())
        if head == "global_average_dense":
            layers.append(dense_layer(_uniform_weights(rng, size * channels).reshape(size, channels), draw_activation()))
        elif head == "dense":
            flat = rows * cols * channels
            layers.append(dense_layer(_uniform_weights(rng, size * flat).reshape(size, flat), draw_activation()))

    spec = validate(NetworkSpec(input_shape=input_shape, layers=tuple(layers)))
    logger.debug(f"random_network(seed={seed}): input {input_shape}, {len(layers)} layers")
    return spec


def line_network(
    length: int,
    channels: int = 1,
    seed: int = 0,
    activation: Activation = Activation.IDENTITY,
    positive: bool = False,
) -> NetworkSpec:
    """
    The 1D topology: two 1x3 valid convs and an averaging output unit.

    Args:
        length: Input length W (the input shape is (1, W, channels))
        channels: Channel count of every layer
        seed: Weight seed
        activation: Activation of both conv layers
        positive: Draw weights from [0.1, 1] so every update emits an event

    Returns:
        Validated NetworkSpec
    """
    rng = make_rng(seed)
    low = 0.1 if positive else -1.0
    layers = [
        conv_layer(_uniform_weights(rng, channels * channels * 3, low).reshape(channels, channels, 1, 3), activation),
        conv_layer(_uniform_weights(rng, channels * channels * 3, low).reshape(channels, channels, 1, 3), activation),
        global_average_layer(),
    ]
    return validate(NetworkSpec(input_shape=(1, length, channels), layers=tuple(layers)))


def demo_network(seed: int = 0) -> NetworkSpec:
    """
    Small 28x28 greyscale classifier architecture with random weights.

    conv3x3 relu 1->4, conv3x3 stride 2 relu 4->8, global average, dense 8->10.
    """
    rng = make_rng(seed)
    layers = [
        conv_layer(_uniform_weights(rng, 4 * 1 * 9).reshape(4, 1, 3, 3), Activation.RELU),
        conv_layer(_uniform_weights(rng, 8 * 4 * 9).reshape(8, 4, 3, 3), Activation.RELU, stride=(2, 2)),
        global_average_layer(),
        dense_layer(_uniform_weights(rng, 10 * 8).reshape(10, 8)),
    ]
    return validate(NetworkSpec(input_shape=(28, 28, 1), layers=tuple(layers)))


def random_input(seed: int, shape: Shape3, density: float = 1.0) -> np.ndarray:
    """
    Uniform [0, 1) input with each value kept with probability `density`.

    Args:
        seed: Generator seed
        shape: (H, W, C)
        density: Fraction of values expected to be nonzero

    Returns:
        float32 array of the given shape
    """
    rng = make_rng(seed)
    values = rng.random(size=shape).astype(np.float32)
    keep = rng.random(size=shape) < density
    return np.where(keep, values, np.float32(0.0)).astype(np.float32)


def blob_input(shape: Shape3, leading_zero_rows: int = 0, sigma: Optional[float] = None) -> np.ndarray:
    """
    Synthetic centred blob below an all-zero prefix of rows.

    Args:
        shape: (H, W, C)
        leading_zero_rows: Rows at the top that stay exactly zero
        sigma: Blob width in pixels (a quarter of the smaller free extent by default)

    Returns:
        float32 array; every row at or below the prefix has positive values
    """
    rows, cols, channels = shape
    free = rows - leading_zero_rows
    if free < 1:
        raise InfeasibleShape(f"{leading_zero_rows} zero rows leave nothing of a {rows}-row input")
    centre_r = leading_zero_rows + (free - 1) / 2.0
    centre_c = (cols - 1) / 2.0
    sigma = sigma or max(min(free, cols) / 4.0, 1.0)
    r = np.arange(rows, dtype=np.float64)[:, None]
    c = np.arange(cols, dtype=np.float64)[None, :]
    blob = np.exp(-((r - centre_r) ** 2 + (c - centre_c) ** 2) / (2.0 * sigma ** 2))
    blob = np.maximum(blob, 1e-3)
    blob[:leading_zero_rows] = 0.0
    return np.repeat(blob[:, :, None], channels, axis=2).astype(np.float32)
