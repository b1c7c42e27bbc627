"""
Console output and CSV writers for the command-line interface.
"""
import csv
import logging
from pathlib import Path
from typing import List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from conecast.config import CSV_CONFIG
from conecast.utils.metrics import Comparison, Curve, RunTrace, SparsityStats

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# (H, W, peak_live_scalars, total_events, wall_time, traced_peak_bytes)
BenchRow = Tuple[int, int, int, int, float, int]


def format_float(value: float) -> str:
    return CSV_CONFIG["float_format"].format(float(value))


def argmax(output: np.ndarray) -> int:
    """Index of the largest output; ties go to the lowest index."""
    output = np.asarray(output)
    return int(np.argmax(output)) if output.size else 0


def display_output(output: np.ndarray, out: TextIO) -> None:
    """Print the final output vector and its argmax."""
    values = " ".join(format_float(v) for v in np.asarray(output).reshape(-1))
    out.write(f"output: {values}\n")
    out.write(f"argmax: {argmax(output)}\n")


def display_comparison(comparison: Comparison, tol: float, out: TextIO) -> None:
    status = "ok" if comparison.ok else "FAILED"
    out.write(f"max_abs_diff: {format_float(comparison.max_abs)}\n")
    out.write(f"max_rel_diff: {format_float(comparison.max_rel)}\n")
    out.write(f"tolerance: {format_float(tol)} {status}\n")


def display_sparsity(stats: SparsityStats, out: TextIO) -> None:
    out.write(f"nonzero_input_fraction: {format_float(stats.nonzero_fraction)}\n")
    out.write(f"events_per_layer: {' '.join(str(e) for e in stats.events_per_layer)}\n")
    out.write(f"updates_per_layer: {' '.join(str(u) for u in stats.updates_per_layer)}\n")
    out.write(f"events_per_nonzero_input: {format_float(stats.events_per_nonzero_input)}\n")


def display_growth(exponents: Tuple[Optional[float], Optional[float]], out: TextIO) -> None:
    """Print the fitted exponents of peak ~ H^a * W^b."""
    labels = ("H", "W")
    for label, exponent in zip(labels, exponents):
        text = "n/a (not varied)" if exponent is None else format_float(exponent)
        out.write(f"peak growth vs {label}: {text}\n")


def _open_csv(path: PathLike) -> TextIO:
    return open(path, "w", newline="", encoding="utf-8")


def write_trace_csv(path: PathLike, trace: RunTrace) -> None:
    """
    Write one line per push: t, output_0..output_{k-1}, events, live_scalars.

    Args:
        path: Destination CSV
        trace: Recorded run
    """
    width = trace.steps[0].output.size if trace.steps else 0
    header = ["t"] + [f"output_{i}" for i in range(width)] + list(CSV_CONFIG["trace_tail"])
    with _open_csv(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for step in trace.steps:
            writer.writerow(
                [step.t] + [format_float(v) for v in step.output] + [step.events, step.live_scalars]
            )
    logger.info(f"Wrote {len(trace)} trace rows to {path}")


def write_bench_rows(handle: TextIO, rows: Sequence[BenchRow]) -> None:
    """Bench header plus one line per swept size."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_CONFIG["bench_header"])
    for h, w, peak, events, wall_time, traced in rows:
        writer.writerow([h, w, peak, events, format_float(wall_time), traced])


def write_bench_csv(path: PathLike, rows: Sequence[BenchRow]) -> None:
    with _open_csv(path) as handle:
        write_bench_rows(handle, rows)
    logger.info(f"Wrote {len(rows)} bench rows to {path}")


def write_converge_csv(path: PathLike, curve: Curve) -> None:
    """Mean convergence curve, preceded by a comment naming the distance."""
    with _open_csv(path) as handle:
        handle.write(CSV_CONFIG["converge_note"] + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_CONFIG["converge_header"])
        for t, distance in curve:
            writer.writerow([t, format_float(distance)])
    logger.info(f"Wrote {len(curve)}-step convergence curve to {path}")


def read_csv_rows(path: PathLike) -> List[List[str]]:
    """Rows of a CSV written above, skipping '#' comment lines."""
    with open(path, newline="", encoding="utf-8") as handle:
        return [row for row in csv.reader(line for line in handle if not line.startswith("#"))]
