"""
Conventional layer-by-layer forward pass.

This is the correctness oracle for the streaming engine. Accumulation is
float64; convolutions sum in fixed (kh, kw, in_channel) ascending order.
"""
import logging

import numpy as np

from conecast.errors import ShapeMismatch
from conecast.models.network import LayerKind, LayerSpec, NetworkSpec, Shape3, layer_padding

# Configure logging
logger = logging.getLogger(__name__)

# Feature maps are float64 arrays shaped (rows, cols, channels)
Tensor3 = np.ndarray


def as_tensor3(values: np.ndarray, shape: Shape3) -> Tensor3:
    """
    Widen input values to a float64 (rows, cols, channels) tensor.

    Args:
        values: Array with rows*cols*channels values
        shape: Expected (rows, cols, channels)

    Returns:
        float64 tensor

    Raises:
        ShapeMismatch: value count or shape disagrees
    """
    array = np.asarray(values, dtype=np.float64)
    if array.shape != tuple(shape):
        if array.size != int(np.prod(shape)) or array.ndim not in (1, 3):
            raise ShapeMismatch(f"input of shape {array.shape} does not match {tuple(shape)}")
        array = array.reshape(shape)
    return array


def conv_forward(layer: LayerSpec, tensor: Tensor3) -> Tensor3:
    """Pre-activation convolution output including bias."""
    rows, cols, _ = tensor.shape
    kh, kw = layer.kernel
    sh, sw = layer.stride
    (pad_top, pad_bottom), (pad_left, pad_right) = layer_padding(layer, tensor.shape)
    padded = np.pad(tensor, ((pad_top, pad_bottom), (pad_left, pad_right), (0, 0)))
    out_rows = (rows + pad_top + pad_bottom - kh) // sh + 1
    out_cols = (cols + pad_left + pad_right - kw) // sw + 1
    weights = layer.weight_tensor()

    out = np.zeros((out_rows, out_cols, layer.out_channels), dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            window = padded[dy:dy + sh * (out_rows - 1) + 1:sh, dx:dx + sw * (out_cols - 1) + 1:sw, :]
            for ch in range(layer.in_channels):
                out += window[:, :, ch, None] * weights[:, ch, dy, dx]
    return out + layer.bias.astype(np.float64)


def dense_layer_forward(layer: LayerSpec, tensor: Tensor3) -> Tensor3:
    """Pre-activation fully connected output including bias, as a (1, 1, out) tensor."""
    flat = tensor.reshape(-1)
    out = layer.weight_tensor() @ flat + layer.bias.astype(np.float64)
    return out.reshape(1, 1, -1)


def global_average_forward(tensor: Tensor3) -> Tensor3:
    """Spatial mean per channel, as a (1, 1, channels) tensor."""
    rows, cols, _ = tensor.shape
    return (tensor.sum(axis=(0, 1)) / (rows * cols)).reshape(1, 1, -1)


def expected_input_shape(layer: LayerSpec, tensor: Tensor3) -> bool:
    if layer.kind == LayerKind.CONV:
        return tensor.shape[2] == layer.in_channels
    if layer.kind == LayerKind.DENSE:
        return tensor.size == layer.in_channels
    return layer.in_channels is None or tensor.shape[2] == layer.in_channels


def layer_forward(layer: LayerSpec, tensor: Tensor3) -> Tensor3:
    """
    Evaluate one layer: out[i] = f(sum_j w_ij * in[j] + b_i).

    Args:
        layer: Layer to evaluate
        tensor: Input feature map

    Returns:
        Output feature map

    Raises:
        ShapeMismatch: input does not fit the layer
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != 3 or not expected_input_shape(layer, tensor):
        raise ShapeMismatch(f"{layer.kind.value} layer cannot take input of shape {tensor.shape}")
    if layer.kind == LayerKind.CONV:
        pre = conv_forward(layer, tensor)
    elif layer.kind == LayerKind.DENSE:
        pre = dense_layer_forward(layer, tensor)
    else:
        pre = global_average_forward(tensor)
    return layer.activation.apply(pre)


def dense_forward(net: NetworkSpec, values: np.ndarray) -> np.ndarray:
    """
    Run the whole network layer by layer.

    Args:
        net: Network to evaluate (biases allowed)
        values: Input with net.input_shape

    Returns:
        Output as a flat float64 vector (row-major over the final feature map)
    """
    tensor = as_tensor3(values, net.input_shape)
    for layer in net.layers:
        tensor = layer_forward(layer, tensor)
    return tensor.reshape(-1)


def zero_suffixed(values: np.ndarray, shape: Shape3, rows_seen: int, axis: int = 0) -> Tensor3:
    """
    Copy of the input with every segment at or after `rows_seen` set to zero.

    Args:
        values: Full input
        shape: (H, W, C)
        rows_seen: Segments already presented
        axis: 0 for rows, 1 for columns

    Returns:
        float64 tensor
    """
    tensor = as_tensor3(values, shape).copy()
    if axis == 0:
        tensor[rows_seen:] = 0.0
    else:
        tensor[:, rows_seen:] = 0.0
    return tensor
