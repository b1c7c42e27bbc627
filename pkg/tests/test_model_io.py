import json
from dataclasses import replace

import numpy as np
import pytest

from conecast.data.model_io import load_model, save_model
from conecast.errors import FormatError, ModelIOError, SizeMismatch, UnsupportedLayer
from conecast.models.generators import demo_network, random_network


@pytest.fixture
def model_paths(tmp_path):
    return tmp_path / "model.json", tmp_path / "model.bin"


@pytest.mark.parametrize("seed", range(50))
def test_round_trip_is_bitwise(model_paths, seed):
    heads = ("global_average", "global_average_dense", "dense", "none")
    net = random_network(seed, depth=1 + seed % 3, head=heads[seed % 4])
    save_model(net, *model_paths)
    loaded = load_model(*model_paths)
    assert loaded == net
    for ours, theirs in zip(loaded.layers, net.layers):
        assert ours.weights.tobytes() == theirs.weights.tobytes()


def test_manifest_layout(model_paths):
    net = demo_network()
    save_model(net, *model_paths)
    manifest = json.loads(model_paths[0].read_text())
    assert manifest["version"] == 1
    assert manifest["input_shape"] == [28, 28, 1]
    conv, _, average, dense = manifest["layers"]
    assert conv["kernel"] == [3, 3] and conv["padding"] == "valid"
    assert conv["weights_offset"] == 0 and conv["bias_offset"] == 4 * 36
    assert average == {"kind": "global_average"}
    assert dense["in"] == 8 and dense["out"] == 10
    weights = 4 * 9 + 4 + 8 * 4 * 9 + 8 + 10 * 8 + 10
    assert model_paths[1].stat().st_size == 4 * weights


def test_saving_twice_gives_identical_files(tmp_path):
    net = random_network(4, depth=2)
    save_model(net, tmp_path / "a.json", tmp_path / "a.bin")
    save_model(net, tmp_path / "b.json", tmp_path / "b.bin")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_truncated_blob(model_paths):
    save_model(random_network(1, depth=2), *model_paths)
    blob = model_paths[1].read_bytes()
    model_paths[1].write_bytes(blob[:-4])
    with pytest.raises(SizeMismatch):
        load_model(*model_paths)


def test_oversized_blob(model_paths):
    save_model(random_network(1, depth=2), *model_paths)
    model_paths[1].write_bytes(model_paths[1].read_bytes() + b"\0\0\0\0")
    with pytest.raises(SizeMismatch):
        load_model(*model_paths)


def _edit_manifest(path, **changes):
    manifest = json.loads(path.read_text())
    manifest.update(changes)
    path.write_text(json.dumps(manifest))
    return manifest


def test_unsupported_version(model_paths):
    save_model(random_network(1, depth=1), *model_paths)
    _edit_manifest(model_paths[0], version=2)
    with pytest.raises(FormatError):
        load_model(*model_paths)


@pytest.mark.parametrize("version", [True, "1", 1.5, None])
def test_version_must_be_the_integer_one(model_paths, version):
    save_model(random_network(1, depth=1), *model_paths)
    _edit_manifest(model_paths[0], version=version)
    with pytest.raises(FormatError):
        load_model(*model_paths)


def test_unknown_layer_kind(model_paths):
    save_model(random_network(1, depth=1), *model_paths)
    manifest = json.loads(model_paths[0].read_text())
    manifest["layers"].append({"kind": "max_pool"})
    model_paths[0].write_text(json.dumps(manifest))
    with pytest.raises(UnsupportedLayer):
        load_model(*model_paths)


def test_not_a_manifest(model_paths):
    model_paths[0].write_text("not json")
    model_paths[1].write_bytes(b"")
    with pytest.raises(FormatError):
        load_model(*model_paths)
    model_paths[0].write_text("[1, 2]")
    with pytest.raises(FormatError):
        load_model(*model_paths)


def test_missing_files(tmp_path):
    with pytest.raises(ModelIOError):
        load_model(tmp_path / "none.json", tmp_path / "none.bin")


def test_bias_survives(model_paths):
    net = random_network(2, depth=1, head="none")
    layer = net.layers[0]
    biased = replace(net, layers=(replace(layer, bias=np.full(layer.out_channels, 0.25, dtype=np.float32)),))
    save_model(biased, *model_paths)
    loaded = load_model(*model_paths)
    assert not loaded.has_zero_bias()
    np.testing.assert_array_equal(loaded.layers[0].bias, 0.25)
