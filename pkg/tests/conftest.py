"""
Shared fixtures for the conecast test suite.
"""
import numpy as np
import pytest

from conecast.models.generators import conv_layer, global_average_layer, line_network, random_input, random_network
from conecast.models.network import Activation, NetworkSpec, Padding, validate


@pytest.fixture
def small_net() -> NetworkSpec:
    """Two-layer 2D net with a global-average head."""
    return random_network(7, depth=2, width_range=(5, 7), channel_range=(1, 3), head="global_average")


@pytest.fixture
def small_input(small_net: NetworkSpec) -> np.ndarray:
    return random_input(7, small_net.input_shape)


@pytest.fixture
def line_net() -> NetworkSpec:
    return line_network(32, positive=True)


def same_tanh_net(height: int, width: int, channels=(1, 2, 2, 2), seed: int = 0) -> NetworkSpec:
    """Three 3x3 same-padded tanh convs plus a global average."""
    rng = np.random.Generator(np.random.Philox(seed))
    layers = []
    for c_in, c_out in zip(channels[:-1], channels[1:]):
        weights = rng.uniform(-1.0, 1.0, size=(c_out, c_in, 3, 3)).astype(np.float32)
        layers.append(conv_layer(weights, Activation.TANH, padding=Padding.SAME))
    layers.append(global_average_layer())
    return validate(NetworkSpec(input_shape=(height, width, channels[0]), layers=tuple(layers)))


@pytest.fixture
def make_same_tanh_net():
    return same_tanh_net
