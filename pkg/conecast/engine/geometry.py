"""
Stream-oriented layer geometry.

The engine always consumes "rows" of a feature map. When the input is streamed
column by column every conv layer is described transposed (kernel, stride and
padding swapped) and a dense head that reads a full feature map gets its weight
columns permuted, so the propagation code only ever deals with rows.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from conecast.errors import UnsupportedLayer
from conecast.models.network import (
    Activation,
    LayerKind,
    NetworkSpec,
    Padding,
    Shape3,
    layer_padding,
)

# Configure logging
logger = logging.getLogger(__name__)

ROWS = "rows"
COLS = "cols"


def orient(shape: Shape3, axis: str) -> Shape3:
    """(H, W, C) seen along the streamed axis."""
    rows, cols, channels = shape
    return (cols, rows, channels) if axis == COLS else (rows, cols, channels)


def _targets(src: int, kernel: int, stride: int, pad: int, size: int) -> Tuple[Tuple[int, int], ...]:
    """Output positions (ascending) fed by input position `src`, with the kernel tap used."""
    hits = []
    for tap in range(kernel):
        offset = src + pad - tap
        if offset % stride:
            continue
        out = offset // stride
        if 0 <= out < size:
            hits.append((out, tap))
    return tuple(sorted(hits))


def _index_arrays(targets: Tuple[Tuple[int, int], ...]) -> Tuple[np.ndarray, np.ndarray]:
    outs = np.array([out for out, _ in targets], dtype=np.intp)
    taps = np.array([tap for _, tap in targets], dtype=np.intp)
    return outs, taps


@dataclass(frozen=True, eq=False)
class ConvStage:
    """One conv layer in stream orientation: rows run along the streamed axis."""

    index: int
    activation: Activation
    kernel: Tuple[int, int]
    stride: Tuple[int, int]
    pad: Tuple[int, int]
    in_shape: Shape3
    out_shape: Shape3
    weights: np.ndarray
    close_at: np.ndarray
    max_open: int
    terminal: bool
    row_targets: Tuple[Tuple[Tuple[int, int], ...], ...] = field(repr=False)
    col_targets: Tuple[Tuple[Tuple[int, int], ...], ...] = field(repr=False)
    col_fanout: np.ndarray = field(repr=False)
    # per source col: (target cols, kernel cols) as index arrays
    col_index: Tuple[Tuple[np.ndarray, np.ndarray], ...] = field(repr=False)

    @property
    def out_channels(self) -> int:
        return self.out_shape[2]

    @property
    def row_size(self) -> int:
        return self.out_shape[1] * self.out_shape[2]

    def row_contribution(self, delta_row: np.ndarray, tap: int) -> np.ndarray:
        """
        Weighted contribution of one source row of deltas through one kernel row.

        Args:
            delta_row: (in_cols, in_channels) deltas of the source row
            tap: Kernel row index dy

        Returns:
            (out_cols, out_channels) increments for the target row
        """
        in_cols = self.in_shape[1]
        out_cols = self.out_shape[1]
        kw, sw = self.kernel[1], self.stride[1]
        left = self.pad[1]
        right = max(sw * (out_cols - 1) + kw - in_cols - left, 0)
        padded = np.pad(delta_row, ((left, right), (0, 0)))
        acc = np.zeros((out_cols, self.out_channels), dtype=np.float64)
        span = sw * (out_cols - 1) + 1
        for dx in range(kw):
            acc += padded[dx:dx + span:sw] @ self.weights[:, :, tap, dx].T
        return acc

    def updates_for(self, delta_row: np.ndarray) -> int:
        """State updates one source row causes per kernel row it reaches."""
        per_col = np.count_nonzero(delta_row, axis=1)
        return int((per_col * self.col_fanout).sum()) * self.out_channels


@dataclass(frozen=True, eq=False)
class HeadStage:
    """A global_average or dense layer holding full (non-streamed) state."""

    index: int
    kind: LayerKind
    activation: Activation
    in_shape: Shape3
    out_size: int
    terminal: bool
    from_map: bool
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def in_row_size(self) -> int:
        return self.in_shape[1] * self.in_shape[2]

    @property
    def average_count(self) -> int:
        return self.in_shape[0] * self.in_shape[1]


Stage = Union[ConvStage, HeadStage]


@dataclass(frozen=True)
class StreamGeometry:
    """Everything the engine needs to know about the network along one axis."""

    axis: str
    input_shape: Shape3
    conv_stages: Tuple[ConvStage, ...]
    head_stages: Tuple[HeadStage, ...]

    @property
    def stages(self) -> Tuple[Stage, ...]:
        return self.conv_stages + self.head_stages

    @property
    def segment_count(self) -> int:
        return self.input_shape[0]


def build_geometry(net: NetworkSpec, axis: str) -> StreamGeometry:
    """
    Describe a validated network along the streamed axis.

    Args:
        net: Validated network
        axis: "rows" or "cols"

    Returns:
        StreamGeometry with close schedules and open-row bounds

    Raises:
        UnsupportedLayer: the network has no layers
    """
    if not net.layers:
        raise UnsupportedLayer("network has no layers to stream through")
    shapes = net.shapes()
    in_shape = orient(net.input_shape, axis)
    close_at = np.arange(in_shape[0])
    extent, step, padded = 1, 1, False
    last = len(net.layers) - 1

    conv_stages: List[ConvStage] = []
    head_stages: List[HeadStage] = []
    for position, layer in enumerate(net.layers):
        index = position + 1
        out_shape = orient(shapes[position], axis)
        original_in = net.shape_before(position)
        if layer.kind == LayerKind.CONV:
            (pad_top, _), (pad_left, _) = layer_padding(layer, original_in)
            weights = layer.weight_tensor()
            kernel, stride, pad = layer.kernel, layer.stride, (pad_top, pad_left)
            if axis == COLS:
                weights = np.ascontiguousarray(weights.transpose(0, 1, 3, 2))
                kernel, stride, pad = kernel[::-1], stride[::-1], pad[::-1]

            row_targets = tuple(_targets(q, kernel[0], stride[0], pad[0], out_shape[0]) for q in range(in_shape[0]))
            col_targets = tuple(_targets(c, kernel[1], stride[1], pad[1], out_shape[1]) for c in range(in_shape[1]))
            last_rows = np.minimum(np.arange(out_shape[0]) * stride[0] - pad[0] + kernel[0] - 1, in_shape[0] - 1)
            close_at = close_at[last_rows]
            extent += (kernel[0] - 1) * step
            step *= stride[0]
            padded = padded or layer.padding == Padding.SAME
            max_open = math.ceil(extent / step) + (1 if padded else 0)

            conv_stages.append(ConvStage(
                index=index,
                activation=layer.activation,
                kernel=tuple(kernel),
                stride=tuple(stride),
                pad=tuple(pad),
                in_shape=in_shape,
                out_shape=out_shape,
                weights=weights,
                close_at=close_at.copy(),
                max_open=max_open,
                terminal=position == last,
                row_targets=row_targets,
                col_targets=col_targets,
                col_fanout=np.array([len(t) for t in col_targets], dtype=np.int64),
                col_index=tuple(_index_arrays(t) for t in col_targets),
            ))
        else:
            from_map = not head_stages
            weights = None
            if layer.kind == LayerKind.DENSE:
                weights = layer.weight_tensor()
                if from_map and axis == COLS:
                    rows, cols, channels = original_in
                    weights = np.ascontiguousarray(
                        weights.reshape(-1, rows, cols, channels).transpose(0, 2, 1, 3).reshape(weights.shape[0], -1)
                    )
            head_stages.append(HeadStage(
                index=index,
                kind=layer.kind,
                activation=layer.activation,
                in_shape=in_shape,
                out_size=out_shape[2],
                terminal=position == last,
                from_map=from_map,
                weights=weights,
            ))
        in_shape = out_shape

    geometry = StreamGeometry(
        axis=axis,
        input_shape=orient(net.input_shape, axis),
        conv_stages=tuple(conv_stages),
        head_stages=tuple(head_stages),
    )
    logger.debug(
        f"Geometry along {axis}: max_open={[s.max_open for s in conv_stages]}, "
        f"{len(head_stages)} head stage(s)"
    )
    return geometry
