import numpy as np
import pytest

from conecast.engine.stream_engine import StreamEngine
from conecast.errors import InvariantViolation
from conecast.engine.state import LayerStateBuffer
from conecast.models.generators import line_network, random_input, random_network


@pytest.mark.parametrize("length", [16, 64, 256])
def test_line_topology_peak_is_constant(length):
    net = line_network(length, positive=True)
    engine = StreamEngine(net, check_invariants=True)
    engine.run(random_input(length, net.input_shape) + np.float32(0.01))
    report = engine.memory_report()
    # 2 open units in the first layer, 4 in the second, 1 output
    assert report.peak == 7
    assert report.peak_per_layer[1] == 2
    assert report.peak_per_layer[2] == 4
    assert report.peak_per_layer[3] == 1


def test_line_topology_releases_rows():
    net = line_network(16, positive=True)
    engine = StreamEngine(net)
    values = random_input(1, net.input_shape) + np.float32(0.01)
    for c in range(16):
        engine.push_element(values[0, c])
        assert engine.memory_report().open_rows[1] <= 2
    engine.finalize()
    assert engine.memory_report().live == 1


@pytest.mark.parametrize("mode, heights, width, channels", [
    ("per_row", (32, 64, 128), 32, (1, 2, 2, 2)),
    ("per_event", (12, 24, 48), 4, (1, 1, 1, 1)),
])
def test_peak_independent_of_height(make_same_tanh_net, mode, heights, width, channels):
    peaks = []
    for height in heights:
        net = make_same_tanh_net(height, width, channels=channels)
        engine = StreamEngine(net, mode=mode, check_invariants=True)
        engine.run(random_input(height, net.input_shape))
        peaks.append(engine.memory_report().peak)
    assert peaks[0] == peaks[1] == peaks[2]


def test_peak_grows_with_width(make_same_tanh_net):
    peaks = {}
    for width in (8, 16, 32):
        net = make_same_tanh_net(128, width)
        engine = StreamEngine(net)
        engine.run(random_input(width, net.input_shape))
        peaks[width] = engine.memory_report().peak
    for width in (16, 32):
        ratio = peaks[width] / peaks[8]
        assert abs(ratio - width / 8) <= 0.15 * (width / 8)


def test_same_padded_open_rows_per_layer(make_same_tanh_net):
    net = make_same_tanh_net(20, 6, channels=(1, 1, 1, 1))
    engine = StreamEngine(net, check_invariants=True)
    engine.run(random_input(3, net.input_shape))
    report = engine.memory_report()
    assert report.peak_per_layer[1] == 2 * 6
    assert report.peak_per_layer[2] == 4 * 6
    assert report.peak_per_layer[3] == 6 * 6
    assert report.peak == (2 + 4 + 6) * 6 + 1
    assert report.peak_in_flight >= report.peak


@pytest.mark.parametrize("seed", range(30))
def test_open_rows_stay_within_bound(seed):
    net = random_network(seed, depth=3, width_range=(6, 14), channel_range=(1, 2))
    engine = StreamEngine(net)
    values = random_input(seed, net.input_shape, density=0.6)
    for snapshot in engine.stream(values):
        for buffer in engine.buffers.values():
            assert buffer.span() <= buffer.max_open
    engine.finalize()
    assert all(not buffer.open_rows for buffer in engine.buffers.values())


def test_bound_check_raises():
    buffer = LayerStateBuffer(1, cols=2, channels=1, close_at=np.arange(10) + 5, max_open=2)
    buffer.row(0)
    buffer.row(2)
    with pytest.raises(InvariantViolation):
        buffer.check_bound(0)
    assert buffer.live_scalars == 4
    assert buffer.close_finished(5) == []
    assert buffer.close_finished(6) == [0]


def test_rows_stay_open_until_last_contribution():
    buffer = LayerStateBuffer(1, cols=1, channels=1, close_at=np.array([0, 2, 2]), max_open=3)
    buffer.row(1)
    entry = buffer.open_rows[1]
    assert entry.remaining_contributions(1) == 2
    assert entry.is_open(2) and not entry.is_open(3)
    buffer.check_bound(2)
    # a row whose last contributing segment is already pushed must have been released
    with pytest.raises(InvariantViolation):
        buffer.check_bound(3)
    assert buffer.close_finished(3) == [1]
    assert buffer.live_scalars == 0
