"""
Command-line entry point: run, compare, bench, gen and converge.

Exit codes: 0 success, 1 tolerance failure, 2 input/format/model error,
3 engine error.
"""
import sys
import time
import argparse
import logging
import tracemalloc
from functools import wraps
from typing import Callable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from conecast.cli.components import (
    BenchRow,
    display_comparison,
    display_growth,
    display_output,
    display_sparsity,
    write_bench_csv,
    write_bench_rows,
    write_converge_csv,
    write_trace_csv,
)
from conecast.config import GENERATOR_CONFIG, TOLERANCE_CONFIG
from conecast.data.input_io import INPUT_FORMATS, read_idx_images, read_input, write_csv, write_raw32
from conecast.data.model_io import load_model, save_model
from conecast.engine.geometry import COLS
from conecast.engine.stream_engine import StreamEngine
from conecast.errors import ConecastError, EngineError, InputFormatError
from conecast.models.dense_ref import dense_forward
from conecast.models.generators import (
    HEAD_CHOICES,
    blob_input,
    demo_network,
    line_network,
    random_input,
    random_network,
)
from conecast.models.network import NetworkSpec
from conecast.utils.metrics import (
    RunTrace,
    compare_outputs,
    convergence_curve,
    fit_growth,
    mean_convergence_curve,
    record,
    sparsity_stats,
)

# Configure logging
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_INPUT = 2
EXIT_ENGINE = 3

ARCHES = ("random", "line", "demo")


def exit_codes(func: Callable[[argparse.Namespace, TextIO], int]) -> Callable[[argparse.Namespace, TextIO], int]:
    """Map conecast errors raised by a command onto its exit code."""

    @wraps(func)
    def wrapper(args: argparse.Namespace, out: TextIO) -> int:
        try:
            return func(args, out)
        except EngineError as e:
            logger.error(f"Engine error: {str(e)}")
            return EXIT_ENGINE
        except (ConecastError, OSError) as e:
            logger.error(f"Error in {func.__name__}: {str(e)}")
            return EXIT_INPUT

    return wrapper


# ---------------------------------------------------------------- helpers

def parse_sweep(text: str) -> List[Tuple[int, int]]:
    """
    Parse "HxW,HxW,..." into (H, W) pairs.

    Raises:
        InputFormatError: malformed entry or non-positive size
    """
    sizes = []
    for item in filter(None, (part.strip() for part in text.split(","))):
        try:
            h, w = (int(v) for v in item.lower().split("x"))
        except ValueError as e:
            raise InputFormatError(f"bad sweep entry {item!r}; expected HxW") from e
        if h < 1 or w < 1:
            raise InputFormatError(f"sweep entry {item!r} must be positive")
        sizes.append((h, w))
    if not sizes:
        raise InputFormatError("empty sweep")
    return sizes


def build_network(args: argparse.Namespace) -> NetworkSpec:
    """Load --model/--weights, or generate the --arch network."""
    if getattr(args, "model", None):
        if not args.weights:
            raise InputFormatError("--model needs --weights")
        return load_model(args.model, args.weights)
    arch = getattr(args, "arch", None) or "random"
    if arch == "line":
        return line_network(args.length, channels=args.channels, seed=args.seed)
    if arch == "demo":
        return demo_network(args.seed)
    return random_network(
        args.seed,
        args.depth,
        width_range=(args.min_width, args.max_width),
        channel_range=(args.min_channels, args.max_channels),
        head=args.head,
    )


def stream_axis(args: argparse.Namespace) -> Optional[str]:
    return COLS if getattr(args, "transpose", False) else None


def stream_with_trace(engine: StreamEngine, values: np.ndarray) -> Tuple[np.ndarray, RunTrace]:
    trace = RunTrace()
    for snapshot in engine.stream(values):
        trace = record(trace, snapshot)
    return engine.finalize(), trace


def load_values(args: argparse.Namespace, net: NetworkSpec) -> np.ndarray:
    decoded = read_input(args.input, args.format, net.input_shape, index=args.index)
    logger.info(f"Input {args.input}: {decoded.format} {decoded.shape}")
    return decoded.values


# ---------------------------------------------------------------- commands

@exit_codes
def cmd_run(args: argparse.Namespace, out: TextIO) -> int:
    """Stream one input, write the optional trace CSV, print the output and argmax."""
    net = build_network(args)
    values = load_values(args, net)
    engine = StreamEngine(net, mode=args.mode, axis=stream_axis(args))
    output, trace = stream_with_trace(engine, values)
    if args.trace:
        write_trace_csv(args.trace, trace)
    display_output(output, out)
    display_sparsity(sparsity_stats(trace, values), out)
    out.write(f"peak_live_scalars: {engine.memory_report().peak}\n")
    return EXIT_OK


@exit_codes
def cmd_compare(args: argparse.Namespace, out: TextIO) -> int:
    """Run the dense oracle and the engine on one input; exit 1 outside tolerance."""
    net = build_network(args)
    values = load_values(args, net)
    reference = dense_forward(net, values)
    streamed = StreamEngine(net, mode=args.mode, axis=stream_axis(args)).run(values)
    tol = TOLERANCE_CONFIG["rtol"] if args.tol is None else args.tol
    comparison = compare_outputs(streamed, reference, tol)
    display_output(streamed, out)
    display_comparison(comparison, tol, out)
    if not comparison.ok:
        logger.warning(f"Streamed output differs from the dense pass beyond tol={tol}")
        return EXIT_TOLERANCE
    return EXIT_OK


def bench_one(net: NetworkSpec, seed: int, mode: str, axis: Optional[str]) -> BenchRow:
    """Stream one seeded random input; measure peak live scalars, events, time and traced bytes."""
    values = random_input(seed, net.input_shape)
    tracemalloc.start()
    started = time.perf_counter()
    try:
        engine = StreamEngine(net, mode=mode, axis=axis)
        engine.run(values)
        wall_time = time.perf_counter() - started
        _, traced_peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    rows, cols, _ = net.input_shape
    return rows, cols, engine.memory_report().peak, sum(engine.events), wall_time, traced_peak


@exit_codes
def cmd_bench(args: argparse.Namespace, out: TextIO) -> int:
    """Sweep input sizes, record peak memory per size, fit its growth."""
    base = build_network(args)
    sizes = parse_sweep(args.sweep)
    channels = base.input_shape[2]
    rows: List[BenchRow] = []
    for h, w in sizes:
        net = base.with_input_shape((h, w, channels))
        row = bench_one(net, args.seed, args.mode, stream_axis(args))
        logger.info(f"bench {h}x{w}: peak {row[2]} scalars, {row[3]} events, {row[4]:.3f}s")
        rows.append(row)
    if args.out:
        write_bench_csv(args.out, rows)
    else:
        write_bench_rows(out, rows)
    display_growth(fit_growth([(r[0], r[1]) for r in rows], [r[2] for r in rows]), out)
    return EXIT_OK


@exit_codes
def cmd_gen(args: argparse.Namespace, out: TextIO) -> int:
    """Write a seeded zero-bias model and, optionally, a seeded random input."""
    net = build_network(args)
    save_model(net, args.model_out, args.weights_out)
    out.write(f"model: {args.model_out} ({len(net.layers)} layers, input {net.input_shape})\n")
    if args.input_out:
        values = random_input(args.seed, net.input_shape, density=args.density)
        if args.format == "csv":
            write_csv(args.input_out, values)
        elif args.format == "raw32":
            write_raw32(args.input_out, values)
        else:
            raise InputFormatError(f"gen writes csv or raw32 inputs, not {args.format}")
        out.write(f"input: {args.input_out}\n")
    return EXIT_OK


@exit_codes
def cmd_converge(args: argparse.Namespace, out: TextIO) -> int:
    """Average the normalized convergence curve over several inputs."""
    net = build_network(args)
    if args.input:
        images = read_idx_images(args.input)[args.index:args.index + args.count]
        if images.shape[1:] != tuple(net.input_shape):
            raise InputFormatError(f"images are {images.shape[1:]}, model expects {net.input_shape}")
        inputs = list(images)
    else:
        rows = net.input_shape[0]
        inputs = [
            blob_input(net.input_shape, leading_zero_rows=min(i % max(rows // 2, 1), rows - 1))
            for i in range(args.count)
        ]
    curves = []
    for values in inputs:
        engine = StreamEngine(net, mode=args.mode, axis=stream_axis(args))
        _, trace = stream_with_trace(engine, values)
        curves.append(convergence_curve(trace))
    curve = mean_convergence_curve(curves)
    if args.out:
        write_converge_csv(args.out, curve)
    # first step after which the mean output stays exact
    converged = curve[-1][0]
    for t, distance in reversed(curve):
        if distance != 0.0:
            break
        converged = t
    out.write(f"converged at t={converged} of {len(curve)}\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_model_args(parser: argparse.ArgumentParser, required: bool = False) -> None:
    parser.add_argument("--model", required=required, help="JSON model manifest")
    parser.add_argument("--weights", required=required, help="float32 weight blob")


def _add_arch_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--arch", choices=ARCHES, default="random", help="generated architecture")
    parser.add_argument("--depth", type=int, default=GENERATOR_CONFIG["depth"])
    parser.add_argument("--min-width", type=int, default=GENERATOR_CONFIG["width_range"][0])
    parser.add_argument("--max-width", type=int, default=GENERATOR_CONFIG["width_range"][1])
    parser.add_argument("--min-channels", type=int, default=GENERATOR_CONFIG["channel_range"][0])
    parser.add_argument("--max-channels", type=int, default=GENERATOR_CONFIG["channel_range"][1])
    parser.add_argument("--head", choices=HEAD_CHOICES, default=GENERATOR_CONFIG["head"])
    parser.add_argument("--length", type=int, default=64, help="input length of the line architecture")
    parser.add_argument("--channels", type=int, default=1, help="channels of the line architecture")


def _add_stream_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=("per-row", "per-event"), default="per-row")
    parser.add_argument("--transpose", action="store_true", help="stream columns instead of rows")


def _add_input_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="input file")
    parser.add_argument("--format", choices=INPUT_FORMATS, default="raw32")
    parser.add_argument("--index", type=int, default=0, help="image index inside an IDX file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conecast", description="Event-based streaming CNN inference")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="stream one input and print the final output")
    _add_model_args(run, required=True)
    _add_input_args(run)
    _add_stream_args(run)
    run.add_argument("--trace", help="write the per-push trace CSV here")
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="check the streamed output against the dense pass")
    _add_model_args(compare, required=True)
    _add_input_args(compare)
    _add_stream_args(compare)
    compare.add_argument("--tol", type=float, default=None, help="relative tolerance (default 1e-6)")
    compare.set_defaults(func=cmd_compare)

    bench = sub.add_parser("bench", help="peak memory over a sweep of input sizes")
    _add_model_args(bench)
    _add_arch_args(bench)
    _add_stream_args(bench)
    bench.add_argument("--sweep", required=True, help='sizes as "HxW,HxW,..."')
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="write the bench CSV here instead of stdout")
    bench.set_defaults(func=cmd_bench)

    gen = sub.add_parser("gen", help="write a seeded random model and input")
    _add_arch_args(gen)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--model", dest="model_out", required=True, help="manifest to write")
    gen.add_argument("--weights", dest="weights_out", required=True, help="weight blob to write")
    gen.add_argument("--input", dest="input_out", help="random input to write")
    gen.add_argument("--format", choices=("raw32", "csv"), default="raw32")
    gen.add_argument("--density", type=float, default=GENERATOR_CONFIG["input_density"])
    gen.set_defaults(func=cmd_gen)

    converge = sub.add_parser("converge", help="mean convergence curve over several inputs")
    _add_model_args(converge)
    _add_arch_args(converge)
    _add_stream_args(converge)
    converge.add_argument("--input", help="IDX image file (synthetic blobs when omitted)")
    converge.add_argument("--index", type=int, default=0, help="first image used")
    converge.add_argument("--count", type=int, default=10)
    converge.add_argument("--seed", type=int, default=0)
    converge.add_argument("--out", help="write the curve CSV here")
    converge.set_defaults(func=cmd_converge)
    return parser


def main(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None) -> int:
    """
    Parse arguments and run one command.

    Args:
        argv: Arguments (defaults to sys.argv[1:])
        out: Stream for command output (defaults to stdout)

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    return args.func(args, out or sys.stdout)
