"""
Event-based, depth-first streaming inference.

Each unit keeps an accumulator c and exposes f(c). Pushing an input segment
turns its nonzero values into events; every event adds w * delta to the
connected units of the next layer, and any unit whose activation changed emits
its own event f(c_new) - f(c_old). Starting from an all-zero state this
reproduces the conventional forward pass while only the rows that can still
change are kept in memory.
"""
import time
import logging
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np

from conecast.config import ENGINE_CONFIG, debug_enabled
from conecast.engine.geometry import COLS, ROWS, ConvStage, HeadStage, StreamGeometry, build_geometry
from conecast.engine.state import (
    EngineSnapshot,
    Event,
    FullState,
    LayerStateBuffer,
    MemoryReport,
    OutputAccumulator,
)
from conecast.errors import (
    EngineFinalized,
    IncompleteInput,
    InvariantViolation,
    LengthMismatch,
    NonFiniteInput,
    NonzeroBias,
    NotOneDimensional,
    TooManyElements,
    TooManyRows,
    WrongStreamAxis,
)
from conecast.models.network import Activation, LayerKind, NetworkSpec, validate

# Configure logging
logger = logging.getLogger(__name__)

# Map of stream rows -> delta array (cols, channels)
RowDeltas = Dict[int, np.ndarray]
Storage = Union[LayerStateBuffer, FullState]


class PropagationMode(str, Enum):
    """
    per_row: coalesced; each layer applies every pending contribution, then emits
    one event per changed unit.
    per_event: LIFO work queue; each input event's cone is finished before the
    next one (leftmost, lowest channel first).
    """

    PER_ROW = "per_row"
    PER_EVENT = "per_event"

    @classmethod
    def parse(cls, value: Union[str, "PropagationMode"]) -> "PropagationMode":
        return cls(str(getattr(value, "value", value)).replace("-", "_"))


class StreamEngine:
    """
    Streaming engine over one validated, zero-bias network.

    Args:
        net: Network to run
        mode: per_row (default) or per_event
        axis: "rows" or "cols"; None picks "cols" for 1D nets (H = 1), else "rows"
        event_threshold: Drop deltas with |delta| <= threshold (0 keeps exactness)
        check_invariants: Assert open-row bounds and nonzero events (defaults to CONECAST_LOG=debug)

    Raises:
        NonzeroBias: some layer has a nonzero bias
        UnsupportedLayer: the network cannot be streamed
    """

    def __init__(
        self,
        net: NetworkSpec,
        mode: Union[str, PropagationMode, None] = None,
        axis: Optional[str] = None,
        event_threshold: Optional[float] = None,
        check_invariants: Optional[bool] = None,
    ):
        self.net = net if net.is_validated else validate(net)
        if not self.net.has_zero_bias():
            raise NonzeroBias("streaming requires every bias to be exactly zero")
        self.mode = PropagationMode.parse(mode or ENGINE_CONFIG["mode"])
        self.one_dimensional = self.net.input_shape[0] == 1
        if axis is None:
            axis = COLS if self.one_dimensional else ROWS
        if axis not in (ROWS, COLS):
            raise WrongStreamAxis(f"unknown stream axis {axis!r}")
        self.axis = axis
        self.event_threshold = float(ENGINE_CONFIG["event_threshold"] if event_threshold is None else event_threshold)
        if check_invariants is None:
            check_invariants = ENGINE_CONFIG["check_invariants"] or debug_enabled()
        self.check_invariants = bool(check_invariants)
        self.geometry: StreamGeometry = build_geometry(self.net, axis)
        self.reset()

    # ------------------------------------------------------------------ state

    def reset(self) -> None:
        """Return to the zero state: no buffers allocated, counters cleared."""
        geometry = self.geometry
        self.buffers: Dict[int, LayerStateBuffer] = {}
        self.storage: Dict[int, Storage] = {}
        for stage in geometry.conv_stages:
            if stage.terminal:
                self.storage[stage.index] = OutputAccumulator(
                    stage.index, stage.out_shape, stage.activation, transposed=self.axis == COLS
                )
            else:
                buffer = LayerStateBuffer(
                    stage.index, stage.out_shape[1], stage.out_channels, stage.close_at, stage.max_open
                )
                self.buffers[stage.index] = buffer
                self.storage[stage.index] = buffer
        for stage in geometry.head_stages:
            shape = (1, 1, stage.out_size)
            if stage.terminal:
                self.storage[stage.index] = OutputAccumulator(stage.index, shape, stage.activation)
            else:
                self.storage[stage.index] = FullState(stage.index, shape, stage.activation)
        self.head: OutputAccumulator = self.storage[len(self.net.layers)]

        layer_count = len(self.net.layers) + 1
        self.events: List[int] = [0] * layer_count
        self.updates: List[int] = [0] * layer_count
        self.segments_pushed = 0
        self.finalized = False
        self._peak = 0
        self._peak_in_flight = 0
        self._peak_per_layer: Dict[int, int] = {index: 0 for index in self.storage}

    @property
    def segment_count(self) -> int:
        return self.geometry.segment_count

    @property
    def rows_pushed(self) -> int:
        """Complete input rows pushed; a column stream completes every row at its last column."""
        if self.axis == ROWS:
            return self.segments_pushed
        return self.net.input_shape[0] if self.segments_pushed == self.segment_count else 0

    @property
    def elements_pushed(self) -> int:
        """Elements of a 1D input pushed so far."""
        if self.axis == COLS:
            return self.segments_pushed
        return self.segments_pushed * self.net.input_shape[1]

    def live_per_layer(self) -> Dict[int, int]:
        return {index: storage.live_scalars for index, storage in self.storage.items()}

    def live_scalars(self) -> int:
        return sum(storage.live_scalars for storage in self.storage.values())

    def memory_report(self) -> MemoryReport:
        """Live/peak accumulator counts per layer and in total."""
        return MemoryReport(
            live_per_layer=self.live_per_layer(),
            open_rows={index: len(buffer.open_rows) for index, buffer in self.buffers.items()},
            live=self.live_scalars(),
            peak=self._peak,
            peak_in_flight=self._peak_in_flight,
            peak_per_layer=dict(self._peak_per_layer),
        )

    def read_output(self) -> np.ndarray:
        """Accumulated output f(c_head); callable at any time, never mutates."""
        return self.head.read()

    def snapshot(self) -> EngineSnapshot:
        return EngineSnapshot(
            segment=self.segments_pushed,
            output=self.read_output(),
            events_per_layer=tuple(self.events),
            updates_per_layer=tuple(self.updates),
            live_scalars=self.live_scalars(),
        )

    # ------------------------------------------------------------------ pushes

    def push_row(self, row: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
        """
        Push the next input row (W*C values) and propagate it depth-first.

        On a 1D network streamed by elements the single row is pushed one
        element at a time.

        Returns:
            Accumulated output after the row

        Raises:
            TooManyRows, LengthMismatch, NonFiniteInput, EngineFinalized, WrongStreamAxis
        """
        rows, cols, channels = self.net.input_shape
        self._ensure_open()
        if self.axis == COLS:
            if not self.one_dimensional:
                raise WrongStreamAxis("engine streams columns; use push_column")
            if self.segments_pushed:
                raise TooManyRows("a 1D input has a single row")
            values = self._checked_segment(row, cols * channels).reshape(cols, 1, channels)
            for element in values:
                self._push_segment(element)
            return self.read_output()
        if self.segments_pushed >= rows:
            raise TooManyRows(f"all {rows} rows already pushed")
        segment = self._checked_segment(row, cols * channels).reshape(cols, channels)
        self._push_segment(segment)
        return self.read_output()

    def push_column(self, column: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
        """
        Push the next input column (H*C values) on a column-streaming engine.

        Returns:
            Accumulated output after the column
        """
        rows, cols, channels = self.net.input_shape
        self._ensure_open()
        if self.axis != COLS:
            raise WrongStreamAxis("engine streams rows; use push_row")
        if self.segments_pushed >= cols:
            raise TooManyRows(f"all {cols} columns already pushed")
        segment = self._checked_segment(column, rows * channels).reshape(rows, channels)
        self._push_segment(segment)
        return self.read_output()

    def push_element(self, values: Union[np.ndarray, Sequence[float], float]) -> np.ndarray:
        """
        Push the next element (C values) of a 1D input.

        Returns:
            Accumulated output after the element

        Raises:
            NotOneDimensional, TooManyElements, LengthMismatch, NonFiniteInput
        """
        _, cols, channels = self.net.input_shape
        self._ensure_open()
        if not self.one_dimensional:
            raise NotOneDimensional(f"input has {self.net.input_shape[0]} rows; push_element needs 1")
        if self.axis != COLS:
            raise WrongStreamAxis("1D engine was built to stream whole rows")
        if self.segments_pushed >= cols:
            raise TooManyElements(f"all {cols} elements already pushed")
        segment = self._checked_segment(np.atleast_1d(values), channels).reshape(1, channels)
        self._push_segment(segment)
        return self.read_output()

    def stream(self, values: np.ndarray) -> Iterator[EngineSnapshot]:
        """
        Push a whole (H, W, C) input along the engine's axis.

        Args:
            values: Input tensor in network orientation

        Yields:
            A snapshot after every push (rows, columns, or 1D elements)
        """
        values = np.asarray(values).reshape(self.net.input_shape)
        rows, cols, _ = self.net.input_shape
        if self.axis == ROWS:
            for r in range(rows):
                self.push_row(values[r])
                yield self.snapshot()
        elif self.one_dimensional:
            for c in range(cols):
                self.push_element(values[0, c])
                yield self.snapshot()
        else:
            for c in range(cols):
                self.push_column(values[:, c])
                yield self.snapshot()

    def run(self, values: np.ndarray) -> np.ndarray:
        """Stream a whole input and finalize; returns the final output."""
        for _ in self.stream(values):
            pass
        return self.finalize()

    def finalize(self) -> np.ndarray:
        """
        Close any remaining rows and return the final output.

        Raises:
            IncompleteInput: fewer segments pushed than the input has
        """
        if self.segments_pushed < self.segment_count:
            raise IncompleteInput(
                f"{self.segments_pushed} of {self.segment_count} {self.axis} pushed"
            )
        for buffer in self.buffers.values():
            buffer.clear()
        self.finalized = True
        logger.debug(f"Finalized after {self.segments_pushed} segments, {sum(self.events)} events")
        return self.read_output()

    def _ensure_open(self) -> None:
        if self.finalized:
            raise EngineFinalized("engine is finalized; reset() before pushing again")

    def _checked_segment(self, values: Union[np.ndarray, Sequence[float]], size: int) -> np.ndarray:
        segment = np.asarray(values, dtype=np.float64).reshape(-1)
        if segment.size != size:
            raise LengthMismatch(f"segment has {segment.size} values, expected {size}")
        if not np.all(np.isfinite(segment)):
            raise NonFiniteInput("segment contains NaN or Inf")
        return segment

    def _push_segment(self, segment: np.ndarray) -> None:
        x = self.segments_pushed
        started = time.perf_counter()
        events_before = sum(self.events)
        if self.mode == PropagationMode.PER_ROW:
            self._propagate_coalesced(x, segment)
        else:
            self._propagate_events(x, segment)
        self.segments_pushed += 1
        for buffer in self.buffers.values():
            closed = buffer.close_finished(self.segments_pushed)
            if closed:
                logger.debug(f"segment {x}: layer {buffer.layer} closed rows {closed}")
        self._sample_boundary()
        logger.debug(
            f"segment {x}: {sum(self.events) - events_before} events, "
            f"{self.live_scalars()} live scalars, {time.perf_counter() - started:.4f}s"
        )

    # ------------------------------------------------------------------ bookkeeping

    def _sample_boundary(self) -> None:
        per_layer = self.live_per_layer()
        live = sum(per_layer.values())
        self._peak = max(self._peak, live)
        self._peak_in_flight = max(self._peak_in_flight, live)
        for index, count in per_layer.items():
            self._peak_per_layer[index] = max(self._peak_per_layer[index], count)

    def _sample_in_flight(self) -> None:
        self._peak_in_flight = max(self._peak_in_flight, self.live_scalars())

    def _check_buffer(self, index: int) -> None:
        if self.check_invariants and index in self.buffers:
            self.buffers[index].check_bound(self.segments_pushed)

    def _emitted(self, stage_activation: Activation, state: np.ndarray, old: np.ndarray) -> np.ndarray:
        diff = stage_activation.apply(state) - stage_activation.apply(old)
        if self.event_threshold > 0.0:
            diff[np.abs(diff) <= self.event_threshold] = 0.0
        return diff

    # ------------------------------------------------------------------ per_row

    def _propagate_coalesced(self, x: int, segment: np.ndarray) -> None:
        nonzero = np.count_nonzero(segment)
        self.events[0] += nonzero
        deltas: RowDeltas = {x: segment} if nonzero else {}

        for stage in self.geometry.conv_stages:
            if not deltas:
                return
            deltas = self._conv_step(stage, deltas)

        vector: Optional[np.ndarray] = None
        for stage in self.geometry.head_stages:
            if not deltas and vector is None:
                return
            vector = self._head_step(stage, deltas, vector)
            deltas = {}
            if vector is None:
                return

    def _conv_step(self, stage: ConvStage, deltas: RowDeltas) -> RowDeltas:
        storage = self.storage[stage.index]
        previous: Dict[int, np.ndarray] = {}
        for src in sorted(deltas):
            delta_row = deltas[src]
            updates = stage.updates_for(delta_row)
            for row, tap in stage.row_targets[src]:
                state = storage.row(row)
                if not stage.terminal and row not in previous:
                    previous[row] = state.copy()
                state += stage.row_contribution(delta_row, tap)
                self.updates[stage.index] += updates
        self._sample_in_flight()
        self._check_buffer(stage.index)
        if stage.terminal:
            return {}

        emitted: RowDeltas = {}
        for row in sorted(previous):
            diff = self._emitted(stage.activation, storage.row(row), previous[row])
            count = np.count_nonzero(diff)
            if count:
                emitted[row] = diff
                self.events[stage.index] += count
        return emitted

    def _head_step(self, stage: HeadStage, deltas: RowDeltas, vector: Optional[np.ndarray]) -> Optional[np.ndarray]:
        storage = self.storage[stage.index]
        if stage.kind == LayerKind.GLOBAL_AVERAGE:
            total = sum(d.sum(axis=0) for d in deltas.values())
            contribution = total / stage.average_count
            self.updates[stage.index] += sum(np.count_nonzero(d) for d in deltas.values())
        elif stage.from_map:
            size = stage.in_row_size
            contribution = np.zeros(stage.out_size, dtype=np.float64)
            for row, d in deltas.items():
                contribution += stage.weights[:, row * size:(row + 1) * size] @ d.reshape(-1)
                self.updates[stage.index] += np.count_nonzero(d) * stage.out_size
        else:
            contribution = stage.weights @ vector
            self.updates[stage.index] += np.count_nonzero(vector) * stage.out_size

        state = storage.vector()
        old = None if stage.terminal else state.copy()
        state += contribution
        self._sample_in_flight()
        if stage.terminal:
            return None
        diff = self._emitted(stage.activation, state, old)
        count = np.count_nonzero(diff)
        self.events[stage.index] += count
        return diff if count else None

    # ------------------------------------------------------------------ per_event

    def _propagate_events(self, x: int, segment: np.ndarray) -> None:
        cols, channels = np.nonzero(segment)
        seeds = [Event(0, x, int(c), int(ch), float(segment[c, ch])) for c, ch in zip(cols, channels)]
        self.events[0] += len(seeds)
        stack: List[Event] = list(reversed(seeds))
        stages = self.geometry.stages
        while stack:
            event = stack.pop()
            if self.check_invariants and event.delta == 0.0:
                raise InvariantViolation(f"zero event dequeued: {event}")
            stage = stages[event.layer]
            if isinstance(stage, ConvStage):
                children = self._apply_conv_event(stage, event)
            else:
                children = self._apply_head_event(stage, event)
            self.events[stage.index] += len(children)
            stack.extend(reversed(children))

    def _apply_conv_event(self, stage: ConvStage, event: Event) -> List[Event]:
        storage = self.storage[stage.index]
        children: List[Event] = []
        cols, taps = stage.col_index[event.col]
        for row, dy in stage.row_targets[event.row]:
            state_row = storage.row(row)
            # (target cols, out channels); each target col appears once per source col
            increment = stage.weights[:, event.channel, dy, taps].T * event.delta
            self.updates[stage.index] += increment.size
            if stage.terminal:
                state_row[cols] += increment
                continue
            old = state_row[cols]
            new = old + increment
            state_row[cols] = new
            diff = self._emitted(stage.activation, new, old)
            for i, channel in zip(*np.nonzero(diff)):
                children.append(Event(stage.index, row, int(cols[i]), int(channel), float(diff[i, channel])))
        self._sample_in_flight()
        self._check_buffer(stage.index)
        return children

    def _apply_head_event(self, stage: HeadStage, event: Event) -> List[Event]:
        state = self.storage[stage.index].vector()
        old = state.copy()
        if stage.kind == LayerKind.GLOBAL_AVERAGE:
            state[event.channel] += event.delta / stage.average_count
            self.updates[stage.index] += 1
        else:
            if stage.from_map:
                column = (event.row * stage.in_shape[1] + event.col) * stage.in_shape[2] + event.channel
            else:
                column = event.channel
            state += stage.weights[:, column] * event.delta
            self.updates[stage.index] += stage.out_size
        self._sample_in_flight()
        if stage.terminal:
            return []
        diff = self._emitted(stage.activation, state, old)
        return [Event(stage.index, 0, 0, int(i), float(diff[i])) for i in np.flatnonzero(diff)]
