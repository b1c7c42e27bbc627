import time

import numpy as np
import pytest

from conecast.engine.geometry import COLS, ROWS, build_geometry
from conecast.engine.stream_engine import PropagationMode, StreamEngine
from conecast.errors import (
    EngineFinalized,
    IncompleteInput,
    LengthMismatch,
    NonFiniteInput,
    NonzeroBias,
    NotOneDimensional,
    TooManyElements,
    TooManyRows,
    WrongStreamAxis,
)
from conecast.models.dense_ref import dense_forward, zero_suffixed
from conecast.models.generators import (
    conv_layer,
    dense_layer,
    global_average_layer,
    random_input,
    random_network,
)
from conecast.models.network import Activation, NetworkSpec, validate
from conecast.utils.metrics import compare_outputs


def assert_close(streamed, reference, tol=1e-6):
    result = compare_outputs(streamed, reference, tol)
    assert result.ok, f"max_abs={result.max_abs} max_rel={result.max_rel}"


def _net(seed, **kwargs):
    heads = ("global_average", "global_average_dense", "dense", "none")
    params = dict(width_range=(4, 16), channel_range=(1, 8), head=heads[seed % 4])
    params.update(kwargs)
    return random_network(seed, depth=1 + seed % 4, **params)


@pytest.mark.parametrize("seed", range(200))
def test_streamed_output_matches_dense_pass(seed):
    net = _net(seed)
    values = random_input(seed, net.input_shape, density=0.3 + 0.7 * (seed % 2))
    streamed = StreamEngine(net).run(values)
    assert_close(streamed, dense_forward(net, values))


def test_two_hundred_networks_within_a_minute():
    started = time.perf_counter()
    for seed in range(200):
        net = _net(seed)
        values = random_input(seed, net.input_shape, density=0.3 + 0.7 * (seed % 2))
        assert_close(StreamEngine(net).run(values), dense_forward(net, values))
    assert time.perf_counter() - started < 60.0


@pytest.mark.parametrize("seed", range(50))
def test_prefix_outputs_match_zero_suffixed_input(seed):
    net = _net(seed)
    values = random_input(seed + 1000, net.input_shape)
    engine = StreamEngine(net, check_invariants=True)
    axis = 1 if engine.axis == COLS else 0
    for snapshot in engine.stream(values):
        reference = dense_forward(net, zero_suffixed(values, net.input_shape, snapshot.segment, axis=axis))
        assert_close(snapshot.output, reference)


@pytest.mark.parametrize("seed", range(50))
def test_per_event_matches_per_row(seed):
    net = _net(seed)
    values = random_input(seed, net.input_shape, density=0.3 + 0.7 * (seed % 2))
    per_row = StreamEngine(net, mode="per_row").run(values)
    per_event = StreamEngine(net, mode=PropagationMode.PER_EVENT, check_invariants=True).run(values)
    assert_close(per_event, per_row)
    assert_close(per_event, dense_forward(net, values))


@pytest.mark.parametrize("seed", range(20))
def test_column_streaming_matches_dense_pass(seed):
    net = _net(seed)
    values = random_input(seed, net.input_shape)
    engine = StreamEngine(net, axis=COLS, check_invariants=True)
    assert_close(engine.run(values), dense_forward(net, values))


@pytest.mark.parametrize("seed", range(20))
def test_one_dimensional_elements(seed):
    net = random_network(seed, depth=2, width_range=(6, 20), height_range=(1, 1), channel_range=(1, 3))
    values = random_input(seed, net.input_shape)
    engine = StreamEngine(net)
    assert engine.axis == COLS
    cols = net.input_shape[1]
    for c in range(cols):
        assert engine.rows_pushed == 0
        engine.push_element(values[0, c])
        assert engine.elements_pushed == c + 1
    assert engine.rows_pushed == 1
    assert_close(engine.finalize(), dense_forward(net, values))

    # a whole 1D row is pushed element by element
    row_engine = StreamEngine(net)
    row_engine.push_row(values[0])
    assert row_engine.rows_pushed == 1
    assert row_engine.elements_pushed == cols
    assert_close(row_engine.finalize(), dense_forward(net, values))


def test_one_dimensional_row_axis():
    net = random_network(2, depth=2, height_range=(1, 1))
    values = random_input(2, net.input_shape)
    engine = StreamEngine(net, axis=ROWS)
    engine.push_row(values[0])
    assert engine.rows_pushed == 1
    assert engine.elements_pushed == net.input_shape[1]
    assert_close(engine.finalize(), dense_forward(net, values))
    with pytest.raises(WrongStreamAxis):
        StreamEngine(net, axis=ROWS).push_element(values[0, 0])


def test_all_zero_input_emits_nothing(small_net):
    engine = StreamEngine(small_net)
    output = engine.run(np.zeros(small_net.input_shape))
    assert sum(engine.events) == 0
    assert sum(engine.updates) == 0
    assert not np.any(output)
    assert engine.memory_report().peak == 0


def test_single_pixel_updates_at_most_kernel_area():
    net = validate(NetworkSpec((8, 8, 1), (conv_layer(np.ones((1, 1, 3, 3), dtype=np.float32)),)))
    values = np.zeros((8, 8, 1), dtype=np.float32)
    values[4, 4, 0] = 1.0
    for mode in PropagationMode:
        engine = StreamEngine(net, mode=mode)
        engine.run(values)
        assert engine.events[0] == 1
        assert engine.updates[1] <= 9


def test_threshold_drops_small_deltas(small_net, small_input):
    exact = StreamEngine(small_net)
    exact.run(small_input)
    pruned = StreamEngine(small_net, event_threshold=1e3)
    pruned.run(small_input)
    assert sum(pruned.events[1:]) == 0
    assert sum(exact.events[1:]) > 0


def test_output_read_does_not_mutate(small_net, small_input):
    engine = StreamEngine(small_net)
    engine.push_row(small_input[0])
    first = engine.read_output()
    second = engine.read_output()
    np.testing.assert_array_equal(first, second)
    first[:] = 123.0
    assert not np.any(engine.read_output() == 123.0)


def test_reset_restores_zero_state(small_net, small_input):
    engine = StreamEngine(small_net)
    expected = engine.run(small_input)
    engine.reset()
    assert engine.rows_pushed == 0 and sum(engine.events) == 0
    assert not np.any(engine.read_output())
    np.testing.assert_array_equal(engine.run(small_input), expected)


def test_nonzero_bias_is_refused():
    layer = conv_layer(np.ones((1, 1, 1, 1), dtype=np.float32), bias=np.array([0.1], dtype=np.float32))
    with pytest.raises(NonzeroBias):
        StreamEngine(validate(NetworkSpec((3, 3, 1), (layer,))))


def test_push_errors(small_net, small_input):
    rows, cols, channels = small_net.input_shape
    engine = StreamEngine(small_net)
    with pytest.raises(LengthMismatch):
        engine.push_row(np.zeros(cols * channels + 1))
    bad = np.array(small_input[0], dtype=np.float64)
    bad.flat[0] = np.nan
    with pytest.raises(NonFiniteInput):
        engine.push_row(bad)
    with pytest.raises(NotOneDimensional):
        engine.push_element(0.0)
    with pytest.raises(WrongStreamAxis):
        engine.push_column(np.zeros(rows * channels))
    engine.push_row(small_input[0])
    with pytest.raises(IncompleteInput):
        engine.finalize()
    for r in range(1, rows):
        engine.push_row(small_input[r])
    with pytest.raises(TooManyRows):
        engine.push_row(small_input[0])
    engine.finalize()
    with pytest.raises(EngineFinalized):
        engine.push_row(small_input[0])


def test_too_many_elements():
    net = random_network(3, depth=1, width_range=(5, 5), height_range=(1, 1), channel_range=(1, 1))
    engine = StreamEngine(net)
    for _ in range(5):
        engine.push_element(1.0)
    with pytest.raises(TooManyElements):
        engine.push_element(1.0)


def test_dense_head_over_columns_uses_permuted_weights():
    weights = np.arange(1, 13, dtype=np.float32).reshape(2, 6)
    net = validate(NetworkSpec((2, 3, 1), (conv_layer(np.ones((1, 1, 1, 1), dtype=np.float32)), dense_layer(weights))))
    values = np.arange(6, dtype=np.float32).reshape(2, 3, 1)
    geometry = build_geometry(net, COLS)
    assert geometry.input_shape == (3, 2, 1)
    assert_close(StreamEngine(net, axis=COLS).run(values), dense_forward(net, values))


def test_snapshots_track_counters(small_net, small_input):
    engine = StreamEngine(small_net)
    snapshots = list(engine.stream(small_input))
    assert [s.segment for s in snapshots] == list(range(1, small_net.input_shape[0] + 1))
    totals = [s.total_events for s in snapshots]
    assert totals == sorted(totals)
    assert snapshots[-1].events_per_layer == tuple(engine.events)


def test_relu_head_after_dense():
    net = validate(NetworkSpec((4, 4, 1), (
        conv_layer(np.ones((2, 1, 2, 2), dtype=np.float32), Activation.RELU),
        global_average_layer(),
        dense_layer(np.array([[1.0, -1.0], [-2.0, 0.5]]), Activation.RELU),
    )))
    values = random_input(9, (4, 4, 1))
    assert_close(StreamEngine(net, mode="per_event").run(values), dense_forward(net, values))


def test_relu_dead_zone_emits_nothing():
    net = validate(NetworkSpec((2, 1, 1), (
        conv_layer(np.ones((1, 1, 2, 1), dtype=np.float32), Activation.RELU),
        conv_layer(np.ones((1, 1, 1, 1), dtype=np.float32)),
    )))
    engine = StreamEngine(net)
    engine.push_row([-5.0])
    engine.push_row([3.0])
    assert engine.events[1] == 0
    assert engine.finalize().tolist() == [0.0]

    engine.reset()
    engine.push_row([-1.0])
    output = engine.push_row([3.0])
    assert engine.events[1] == 1
    assert output.tolist() == [2.0]


def test_identity_chain_multiplies_weights():
    net = validate(NetworkSpec((1, 1, 1), (
        conv_layer(np.full((1, 1, 1, 1), 2.0, dtype=np.float32)),
        conv_layer(np.full((1, 1, 1, 1), 3.0, dtype=np.float32)),
    )))
    engine = StreamEngine(net, mode="per_event")
    assert engine.push_element([0.5]).tolist() == [3.0]


def test_fresh_engine_is_empty(small_net):
    engine = StreamEngine(small_net)
    report = engine.memory_report()
    assert report.live == 0 and report.peak == 0
    assert not np.any(engine.read_output())


def test_events_grow_as_pixels_turn_on():
    net = random_network(12, depth=2, width_range=(6, 6), channel_range=(1, 2), activation=Activation.IDENTITY)
    rng = np.random.Generator(np.random.Philox(12))
    values = np.zeros(net.input_shape, dtype=np.float32)
    positions = rng.permutation(values.size)[:12]
    counts = []
    for position in positions:
        values.flat[position] = np.float32(rng.uniform(0.5, 1.0))
        engine = StreamEngine(net)
        engine.run(values)
        counts.append(sum(engine.events))
    assert counts == sorted(counts)
    assert counts[0] > 0


def test_reset_mid_stream(small_net, small_input):
    engine = StreamEngine(small_net)
    first = [s.output for s in engine.stream(small_input)]
    engine.reset()
    engine.push_row(small_input[0])
    engine.reset()
    assert engine.live_scalars() == 0
    second = [s.output for s in engine.stream(small_input)]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
