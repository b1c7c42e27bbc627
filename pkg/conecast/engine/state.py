"""
State containers used by the streaming engine.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from conecast.errors import InvariantViolation
from conecast.models.network import Activation, Shape3

# Configure logging
logger = logging.getLogger(__name__)


class Event(NamedTuple):
    """A nonzero activation change at (layer, row, col, channel); layer 0 is the input."""

    layer: int
    row: int
    col: int
    channel: int
    delta: float


@dataclass
class UnitStateRow:
    """One open feature-map row of accumulators c (cols x channels)."""

    layer: int
    row: int
    states: np.ndarray
    close_at: int

    def remaining_contributions(self, segments_pushed: int) -> int:
        """Input segments not yet pushed that can still change this row."""
        return max(self.close_at + 1 - segments_pushed, 0)

    def is_open(self, segments_pushed: int) -> bool:
        return self.remaining_contributions(segments_pushed) > 0


class LayerStateBuffer:
    """
    Lazily allocated open rows of one conv layer.

    Rows are created on their first contribution and released once the input
    segment that last feeds them has been pushed.
    """

    def __init__(self, layer: int, cols: int, channels: int, close_at: np.ndarray, max_open: int):
        self.layer = layer
        self.cols = cols
        self.channels = channels
        self.close_at = close_at
        self.max_open = max_open
        self.open_rows: Dict[int, UnitStateRow] = {}

    def row(self, index: int) -> np.ndarray:
        """
        Accumulators of row `index`, allocating zeros on first use.

        Args:
            index: Row coordinate in this layer

        Returns:
            Writable (cols, channels) float64 array
        """
        entry = self.open_rows.get(index)
        if entry is None:
            entry = UnitStateRow(
                layer=self.layer,
                row=index,
                states=np.zeros((self.cols, self.channels), dtype=np.float64),
                close_at=int(self.close_at[index]),
            )
            self.open_rows[index] = entry
        return entry.states

    def close_finished(self, segments_pushed: int) -> List[int]:
        """
        Release every row no unpushed segment can still change.

        Args:
            segments_pushed: Input segments pushed so far

        Returns:
            Row coordinates released
        """
        closed = [r for r, entry in self.open_rows.items() if not entry.is_open(segments_pushed)]
        for r in closed:
            del self.open_rows[r]
        return sorted(closed)

    def span(self) -> int:
        """Number of consecutive coordinates covering every open row."""
        if not self.open_rows:
            return 0
        return max(self.open_rows) - min(self.open_rows) + 1

    def check_bound(self, segments_pushed: int) -> None:
        if self.span() > self.max_open:
            raise InvariantViolation(
                f"layer {self.layer}: open rows {sorted(self.open_rows)} exceed max_open={self.max_open}"
            )
        stale = [r for r, entry in self.open_rows.items() if not entry.is_open(segments_pushed)]
        if stale:
            raise InvariantViolation(f"layer {self.layer}: rows {sorted(stale)} kept after their last contribution")

    @property
    def live_scalars(self) -> int:
        return len(self.open_rows) * self.cols * self.channels

    def clear(self) -> None:
        self.open_rows.clear()


class FullState:
    """Full (never released) accumulator array of a head layer, allocated on first use."""

    def __init__(self, layer: int, shape: Shape3, activation: Activation):
        self.layer = layer
        self.shape = shape
        self.activation = activation
        self.states: Optional[np.ndarray] = None

    def _allocate(self) -> np.ndarray:
        if self.states is None:
            self.states = np.zeros(self.shape, dtype=np.float64)
        return self.states

    def row(self, index: int) -> np.ndarray:
        return self._allocate()[index]

    def vector(self) -> np.ndarray:
        return self._allocate().reshape(-1)

    @property
    def live_scalars(self) -> int:
        return 0 if self.states is None else int(self.states.size)


class OutputAccumulator(FullState):
    """
    States of the terminal layer; the activation is applied only when read.

    Args:
        layer: Network layer index
        shape: Stream-oriented state shape
        activation: Terminal layer activation
        transposed: States are stored column-major relative to the network output
    """

    def __init__(self, layer: int, shape: Shape3, activation: Activation, transposed: bool = False):
        super().__init__(layer, shape, activation)
        self.transposed = transposed

    def read(self) -> np.ndarray:
        """f(states) as a flat vector in network output order; does not mutate."""
        if self.states is None:
            return np.zeros(int(np.prod(self.shape)), dtype=np.float64)
        states = self.states.transpose(1, 0, 2) if self.transposed else self.states
        return self.activation.apply(states).reshape(-1)


@dataclass(frozen=True)
class MemoryReport:
    """
    Live accumulator counts.

    One scalar per allocated unit state c of an open row, plus every allocated
    head/output accumulator. `peak` is sampled at segment boundaries;
    `peak_in_flight` also covers the cone while a segment is propagating.

    A row is charged to the layer that owns its accumulators: two 1x3 valid
    convs with an averaging head hold 2 + 4 + 1 scalars at a boundary.
    """

    live_per_layer: Dict[int, int]
    open_rows: Dict[int, int]
    live: int
    peak: int
    peak_in_flight: int
    peak_per_layer: Dict[int, int]


@dataclass(frozen=True)
class EngineSnapshot:
    """Read-only view of the engine taken right after a push."""

    segment: int
    output: np.ndarray
    events_per_layer: Tuple[int, ...]
    updates_per_layer: Tuple[int, ...]
    live_scalars: int

    @property
    def total_events(self) -> int:
        return int(sum(self.events_per_layer))
