"""
Run traces, convergence curves, sparsity statistics and output comparison.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from conecast.config import TOLERANCE_CONFIG
from conecast.engine.state import EngineSnapshot
from conecast.errors import EmptyTrace, MetricsError

# Configure logging
logger = logging.getLogger(__name__)

# (t, distance) pairs
Curve = List[Tuple[int, float]]


@dataclass(frozen=True)
class TraceStep:
    t: int
    output: np.ndarray
    events: int
    live_scalars: int
    events_per_layer: Tuple[int, ...] = ()
    updates_per_layer: Tuple[int, ...] = ()


@dataclass(frozen=True)
class RunTrace:
    """Accumulated outputs over a streamed presentation, one step per push."""

    steps: Tuple[TraceStep, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def outputs(self) -> np.ndarray:
        return np.stack([step.output for step in self.steps]) if self.steps else np.zeros((0, 0))

    @property
    def last(self) -> TraceStep:
        if not self.steps:
            raise EmptyTrace("trace has no steps")
        return self.steps[-1]


@dataclass(frozen=True)
class SparsityStats:
    nonzero_fraction: float
    events_per_layer: Tuple[int, ...]
    updates_per_layer: Tuple[int, ...]
    events_per_nonzero_input: float


@dataclass(frozen=True)
class Comparison:
    max_abs: float
    max_rel: float
    ok: bool


def record(trace: RunTrace, snapshot: EngineSnapshot) -> RunTrace:
    """
    Append a post-push snapshot to a trace.

    Args:
        trace: Trace so far
        snapshot: Engine snapshot taken right after a push

    Returns:
        New trace with step t = len(trace) + 1
    """
    step = TraceStep(
        t=len(trace.steps) + 1,
        output=np.array(snapshot.output, dtype=np.float64, copy=True),
        events=snapshot.total_events,
        live_scalars=snapshot.live_scalars,
        events_per_layer=tuple(snapshot.events_per_layer),
        updates_per_layer=tuple(snapshot.updates_per_layer),
    )
    return RunTrace(steps=trace.steps + (step,))


def convergence_curve(trace: RunTrace, final: Optional[np.ndarray] = None) -> Curve:
    """
    Distance of every accumulated output from the final one.

    distance(t) = ||output_t - final|| / ||final|| (L2), or the plain norm
    when final is all zero.

    Args:
        trace: Recorded run
        final: Final output (defaults to the last recorded output)

    Returns:
        List of (t, distance)

    Raises:
        EmptyTrace: nothing was recorded
    """
    if not trace.steps:
        raise EmptyTrace("cannot compute convergence of an empty trace")
    target = trace.last.output if final is None else np.asarray(final, dtype=np.float64)
    scale = float(np.linalg.norm(target.reshape(1, -1), axis=1)[0])
    distances = np.linalg.norm(trace.outputs - target, axis=1)
    if scale > 0.0:
        distances = distances / scale
    return [(step.t, float(d)) for step, d in zip(trace.steps, distances)]


def mean_convergence_curve(curves: Sequence[Curve]) -> Curve:
    """Pointwise mean of equal-length convergence curves."""
    if not curves:
        raise EmptyTrace("no curves to average")
    lengths = {len(curve) for curve in curves}
    if len(lengths) != 1:
        raise MetricsError(f"curves have different lengths: {sorted(lengths)}")
    distances = np.array([[d for _, d in curve] for curve in curves], dtype=np.float64)
    return [(t, float(m)) for (t, _), m in zip(curves[0], distances.mean(axis=0))]


def sparsity_stats(trace: RunTrace, values: np.ndarray) -> SparsityStats:
    """
    Event statistics of a complete run.

    Args:
        trace: Complete trace (counters of its last step are used)
        values: The streamed input

    Returns:
        SparsityStats
    """
    values = np.asarray(values)
    nonzero = int(np.count_nonzero(values))
    if not trace.steps:
        return SparsityStats(nonzero / max(values.size, 1), (), (), 0.0)
    last = trace.last
    return SparsityStats(
        nonzero_fraction=nonzero / max(values.size, 1),
        events_per_layer=last.events_per_layer,
        updates_per_layer=last.updates_per_layer,
        events_per_nonzero_input=last.events / nonzero if nonzero else 0.0,
    )


def compare_outputs(streamed: np.ndarray, reference: np.ndarray, tol: Optional[float] = None) -> Comparison:
    """
    Componentwise comparison |s - r| <= tol * |r| + tol * abs_floor_ratio.

    Args:
        streamed: Engine output
        reference: Dense oracle output
        tol: Relative tolerance (default 1e-6, absolute floor 1e-9)

    Returns:
        Comparison with the largest absolute and relative differences
    """
    rtol = TOLERANCE_CONFIG["rtol"] if tol is None else float(tol)
    streamed = np.asarray(streamed, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if streamed.shape != reference.shape:
        raise MetricsError(f"output shapes differ: {streamed.shape} vs {reference.shape}")
    diff = np.abs(streamed - reference)
    if diff.size == 0:
        return Comparison(0.0, 0.0, True)
    magnitude = np.abs(reference)
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.where(magnitude > 0, diff / magnitude, np.where(diff > 0, np.inf, 0.0))
    ok = bool(np.all(diff <= rtol * magnitude + rtol * TOLERANCE_CONFIG["abs_floor_ratio"]))
    return Comparison(max_abs=float(diff.max()), max_rel=float(relative.max()), ok=ok)


def fit_growth(sizes: Sequence[Tuple[int, int]], peaks: Sequence[int]) -> Tuple[Optional[float], Optional[float]]:
    """
    Least-squares exponents of peak ~ H^a * W^b over a sweep.

    Args:
        sizes: (H, W) per sweep point
        peaks: Peak live scalars per sweep point

    Returns:
        (a, b); an exponent is None when that dimension does not vary
    """
    heights = np.log(np.array([h for h, _ in sizes], dtype=np.float64))
    widths = np.log(np.array([w for _, w in sizes], dtype=np.float64))
    target = np.log(np.maximum(np.array(peaks, dtype=np.float64), 1.0))
    columns = [np.ones_like(target)]
    vary_h = np.ptp(heights) > 0
    vary_w = np.ptp(widths) > 0
    if vary_h:
        columns.append(heights)
    if vary_w:
        columns.append(widths)
    coef, *_ = np.linalg.lstsq(np.stack(columns, axis=1), target, rcond=None)
    a = float(coef[1]) if vary_h else None
    b = float(coef[-1]) if vary_w else None
    return a, b
