"""
Network specifications shared by the dense oracle and the streaming engine.
This module defines layer and network types and validates their shapes.
"""
import math
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from conecast.errors import BadHead, EmptyOutput, InvalidLayer, ShapeMismatch

# Configure logging
logger = logging.getLogger(__name__)

# Type aliases for better code readability
Shape3 = Tuple[int, int, int]
Pair = Tuple[int, int]


class Activation(str, Enum):
    """Supported non-linearities; each satisfies f(0) = 0."""

    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"

    def apply(self, values: np.ndarray) -> np.ndarray:
        """
        Evaluate the activation elementwise.

        Args:
            values: Pre-activation values

        Returns:
            New array with f applied
        """
        return _ACTIVATION_FUNCS[self](values)


_ACTIVATION_FUNCS: Dict[Activation, Callable[[np.ndarray], np.ndarray]] = {
    Activation.IDENTITY: lambda x: np.array(x, dtype=np.float64, copy=True),
    Activation.RELU: lambda x: np.maximum(x, 0.0),
    Activation.TANH: np.tanh,
}


class LayerKind(str, Enum):
    CONV = "conv"
    DENSE = "dense"
    GLOBAL_AVERAGE = "global_average"


class Padding(str, Enum):
    VALID = "valid"
    SAME = "same"


def _frozen_copy(values: np.ndarray) -> np.ndarray:
    """Flat float32 copy that cannot be written through."""
    array = np.array(values, dtype=np.float32).ravel()
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """
    One layer of a network.

    Conv weights are laid out [out_ch][in_ch][kh][kw]; dense weights are
    [out][in] where the dense input index runs row-major over (row, col, channel)
    of the incoming feature map. For dense layers in_channels/out_channels hold
    the input and output sizes.
    """

    kind: LayerKind
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    activation: Activation = Activation.IDENTITY
    kernel: Pair = (1, 1)
    stride: Pair = (1, 1)
    padding: Padding = Padding.VALID
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float32))
    bias: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float32))

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LayerKind(self.kind))
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "padding", Padding(self.padding))
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        object.__setattr__(self, "weights", _frozen_copy(self.weights))
        object.__setattr__(self, "bias", _frozen_copy(self.bias))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LayerSpec):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.in_channels == other.in_channels
            and self.out_channels == other.out_channels
            and self.activation == other.activation
            and self.kernel == other.kernel
            and self.stride == other.stride
            and self.padding == other.padding
            and self.weights.tobytes() == other.weights.tobytes()
            and self.bias.tobytes() == other.bias.tobytes()
        )

    @property
    def is_head(self) -> bool:
        return self.kind != LayerKind.CONV

    def weight_shape(self) -> Tuple[int, ...]:
        """Declared weight tensor shape (empty for global_average)."""
        if self.kind == LayerKind.CONV:
            return (self.out_channels, self.in_channels, self.kernel[0], self.kernel[1])
        if self.kind == LayerKind.DENSE:
            return (self.out_channels, self.in_channels)
        return (0,)

    def weight_tensor(self) -> np.ndarray:
        """Weights reshaped to weight_shape() and widened to float64."""
        return self.weights.astype(np.float64).reshape(self.weight_shape())


@dataclass(frozen=True)
class NetworkSpec:
    """
    Ordered layer list with the input shape (H, W, C).

    H is the streamed dimension; H = 1 with a length-W row is the 1D case.
    inferred_shapes is filled in by validate().
    """

    input_shape: Shape3
    layers: Tuple[LayerSpec, ...]
    inferred_shapes: Optional[Tuple[Shape3, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.inferred_shapes is not None:
            object.__setattr__(
                self, "inferred_shapes", tuple(tuple(s) for s in self.inferred_shapes)
            )

    @property
    def is_validated(self) -> bool:
        return self.inferred_shapes is not None

    def shapes(self) -> Tuple[Shape3, ...]:
        """Per-layer output shapes, validating on demand."""
        return self.inferred_shapes if self.is_validated else validate(self).inferred_shapes

    @property
    def output_shape(self) -> Shape3:
        shapes = self.shapes()
        return shapes[-1] if shapes else self.input_shape

    @property
    def output_size(self) -> int:
        return int(np.prod(self.output_shape))

    def shape_before(self, index: int) -> Shape3:
        """Input shape of layer `index`."""
        if index == 0:
            return self.input_shape
        return self.shapes()[index - 1]

    def has_zero_bias(self) -> bool:
        return all(not np.any(layer.bias) for layer in self.layers)

    def with_input_shape(self, input_shape: Shape3) -> "NetworkSpec":
        """
        Re-target the network to another input size and re-validate.

        Args:
            input_shape: New (H, W, C); C must stay the same

        Returns:
            Validated spec with the new geometry
        """
        return validate(NetworkSpec(input_shape=input_shape, layers=self.layers))


def conv_output_size(size: int, kernel: int, stride: int, padding: Padding) -> int:
    """
    Output length of a convolution along one axis.

    Args:
        size: Input length
        kernel: Kernel extent
        stride: Stride
        padding: valid or same

    Returns:
        floor((size + pad_total - kernel) / stride) + 1
    """
    if padding == Padding.SAME:
        return math.ceil(size / stride)
    return (size - kernel) // stride + 1


def same_padding(size: int, kernel: int, stride: int) -> Pair:
    """
    Zero padding (before, after) that gives ceil(size / stride) outputs.

    Args:
        size: Input length
        kernel: Kernel extent
        stride: Stride

    Returns:
        Tuple of leading and trailing pad
    """
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def layer_padding(layer: LayerSpec, in_shape: Shape3) -> Tuple[Pair, Pair]:
    """Leading/trailing pads along rows and along columns for a conv layer."""
    if layer.padding == Padding.VALID:
        return (0, 0), (0, 0)
    rows = same_padding(in_shape[0], layer.kernel[0], layer.stride[0])
    cols = same_padding(in_shape[1], layer.kernel[1], layer.stride[1])
    return rows, cols


def _check_layer_params(index: int, layer: LayerSpec) -> None:
    if layer.kind == LayerKind.GLOBAL_AVERAGE:
        if layer.activation != Activation.IDENTITY:
            raise InvalidLayer(f"layer {index}: global_average must use identity activation")
        if layer.weights.size or layer.bias.size:
            raise InvalidLayer(f"layer {index}: global_average has no parameters")
        return
    if not layer.in_channels or not layer.out_channels or layer.in_channels < 1 or layer.out_channels < 1:
        raise InvalidLayer(f"layer {index}: channel counts must be positive")
    if layer.kind == LayerKind.CONV:
        if min(layer.kernel) < 1 or min(layer.stride) < 1:
            raise InvalidLayer(f"layer {index}: kernel and stride must be >= 1")
    expected = int(np.prod(layer.weight_shape()))
    if layer.weights.size != expected:
        raise ShapeMismatch(
            f"layer {index}: {layer.weights.size} weights, expected {expected} for shape {layer.weight_shape()}"
        )
    if layer.bias.size != layer.out_channels:
        raise ShapeMismatch(
            f"layer {index}: {layer.bias.size} bias values, expected {layer.out_channels}"
        )


def validate(spec: NetworkSpec) -> NetworkSpec:
    """
    Check a network and annotate it with per-layer output shapes.

    Args:
        spec: Network to check

    Returns:
        Spec with inferred_shapes set; global_average layers get their
        channel counts filled in

    Raises:
        ShapeMismatch: channel chain or tensor sizes broken
        EmptyOutput: a conv collapses a dimension below 1
        BadHead: conv after a head layer, or a second global_average
        InvalidLayer: impossible layer parameters
    """
    if len(spec.input_shape) != 3 or min(spec.input_shape) < 1:
        raise ShapeMismatch(f"input shape must be three positive dims, got {spec.input_shape}")

    shape: Shape3 = spec.input_shape
    shapes: List[Shape3] = []
    layers: List[LayerSpec] = []
    in_head = False
    seen_average = False

    for index, layer in enumerate(spec.layers):
        rows, cols, channels = shape
        if layer.kind == LayerKind.GLOBAL_AVERAGE:
            if seen_average or in_head:
                raise BadHead(f"layer {index}: global_average must be the first head layer")
            layer = replace(layer, in_channels=channels, out_channels=channels)
        _check_layer_params(index, layer)

        if layer.kind == LayerKind.CONV:
            if in_head:
                raise BadHead(f"layer {index}: conv after a {layers[-1].kind.value} layer")
            if layer.in_channels != channels:
                raise ShapeMismatch(
                    f"layer {index}: in_channels={layer.in_channels} but previous layer has {channels}"
                )
            out_rows = conv_output_size(rows, layer.kernel[0], layer.stride[0], layer.padding)
            out_cols = conv_output_size(cols, layer.kernel[1], layer.stride[1], layer.padding)
            if out_rows < 1 or out_cols < 1:
                raise EmptyOutput(
                    f"layer {index}: {rows}x{cols} input collapses to {out_rows}x{out_cols}"
                )
            shape = (out_rows, out_cols, layer.out_channels)
        elif layer.kind == LayerKind.GLOBAL_AVERAGE:
            seen_average = True
            shape = (1, 1, channels)
        else:
            flat = rows * cols * channels
            if layer.in_channels != flat:
                raise ShapeMismatch(f"layer {index}: dense in={layer.in_channels} but input has {flat} values")
            shape = (1, 1, layer.out_channels)

        in_head = layer.is_head
        shapes.append(shape)
        layers.append(layer)

    return NetworkSpec(input_shape=spec.input_shape, layers=tuple(layers), inferred_shapes=tuple(shapes))
