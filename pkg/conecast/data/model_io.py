"""
Model persistence: a JSON manifest plus a raw little-endian float32 weight blob.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from conecast.config import MANIFEST_VERSION
from conecast.errors import FormatError, ModelIOError, SizeMismatch, UnsupportedLayer
from conecast.models.network import LayerKind, LayerSpec, NetworkSpec, validate

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
BLOB_DTYPE = np.dtype("<f4")
SUPPORTED_KINDS = {kind.value for kind in LayerKind}


def _layer_entry(layer: LayerSpec, offset: int, chunks: List[bytes]) -> Tuple[Dict[str, Any], int]:
    if layer.kind == LayerKind.GLOBAL_AVERAGE:
        return {"kind": layer.kind.value}, offset

    entry: Dict[str, Any] = {"kind": layer.kind.value}
    if layer.kind == LayerKind.CONV:
        entry.update({
            "kernel": list(layer.kernel),
            "stride": list(layer.stride),
            "padding": layer.padding.value,
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
        })
    else:
        entry.update({"in": layer.in_channels, "out": layer.out_channels})
    entry["activation"] = layer.activation.value

    for key, values in (("weights_offset", layer.weights), ("bias_offset", layer.bias)):
        data = np.asarray(values, dtype=BLOB_DTYPE).tobytes()
        entry[key] = offset
        chunks.append(data)
        offset += len(data)
    return entry, offset


def save_model(spec: NetworkSpec, manifest_path: PathLike, blob_path: PathLike) -> None:
    """
    Write a network as manifest + weight blob.

    Args:
        spec: Network to save (validated here)
        manifest_path: Destination of the JSON manifest
        blob_path: Destination of the float32 blob

    Raises:
        ModelIOError: the files cannot be written
    """
    spec = validate(spec)
    chunks: List[bytes] = []
    offset = 0
    layers = []
    for layer in spec.layers:
        entry, offset = _layer_entry(layer, offset, chunks)
        layers.append(entry)
    manifest = {
        "version": MANIFEST_VERSION,
        "input_shape": list(spec.input_shape),
        "layers": layers,
    }
    try:
        Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        Path(blob_path).write_bytes(b"".join(chunks))
    except OSError as e:
        logger.error(f"Could not write model files: {str(e)}")
        raise ModelIOError(f"cannot write model: {e}") from e
    logger.info(f"Saved model with {len(layers)} layers ({offset} weight bytes) to {manifest_path}")


def _tensor(blob: bytes, offset: Any, count: int, what: str) -> np.ndarray:
    if not isinstance(offset, int) or offset < 0:
        raise FormatError(f"{what}: offset must be a non-negative integer, got {offset!r}")
    end = offset + count * BLOB_DTYPE.itemsize
    if end > len(blob):
        raise SizeMismatch(f"{what}: bytes {offset}..{end} exceed blob length {len(blob)}")
    return np.frombuffer(blob, dtype=BLOB_DTYPE, count=count, offset=offset).astype(np.float32)


def _parse_layer(index: int, entry: Dict[str, Any], blob: bytes) -> Tuple[LayerSpec, int]:
    kind = entry.get("kind")
    if kind not in SUPPORTED_KINDS:
        raise UnsupportedLayer(f"layer {index}: kind {kind!r} cannot be streamed or evaluated")
    if kind == LayerKind.GLOBAL_AVERAGE.value:
        return LayerSpec(kind=LayerKind.GLOBAL_AVERAGE), 0

    try:
        if kind == LayerKind.CONV.value:
            in_ch, out_ch = int(entry["in_channels"]), int(entry["out_channels"])
            kernel = tuple(int(k) for k in entry["kernel"])
            weight_count = out_ch * in_ch * kernel[0] * kernel[1]
            params = {
                "kernel": kernel,
                "stride": tuple(int(s) for s in entry.get("stride", (1, 1))),
                "padding": entry.get("padding", "valid"),
            }
        else:
            in_ch, out_ch = int(entry["in"]), int(entry["out"])
            weight_count = out_ch * in_ch
            params = {}
        activation = entry.get("activation", "identity")
        weights_offset = entry["weights_offset"]
        bias_offset = entry["bias_offset"]
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise FormatError(f"layer {index}: malformed {kind} entry ({e})") from e

    weights = _tensor(blob, weights_offset, weight_count, f"layer {index} weights")
    bias = _tensor(blob, bias_offset, out_ch, f"layer {index} bias")
    try:
        layer = LayerSpec(
            kind=kind,
            in_channels=in_ch,
            out_channels=out_ch,
            activation=activation,
            weights=weights,
            bias=bias,
            **params,
        )
    except ValueError as e:
        raise FormatError(f"layer {index}: {e}") from e
    return layer, (weight_count + out_ch) * BLOB_DTYPE.itemsize


def load_model(manifest_path: PathLike, blob_path: PathLike) -> NetworkSpec:
    """
    Read a network saved by save_model.

    Args:
        manifest_path: JSON manifest
        blob_path: float32 weight blob

    Returns:
        Validated NetworkSpec, bitwise equal to the saved one

    Raises:
        FormatError: not a manifest, or an unsupported version
        SizeMismatch: blob length differs from the declared tensors
        UnsupportedLayer: manifest names a layer kind that is not supported
        ModelIOError: the files cannot be read
    """
    try:
        text = Path(manifest_path).read_text(encoding="utf-8")
        blob = Path(blob_path).read_bytes()
    except OSError as e:
        logger.error(f"Could not read model files: {str(e)}")
        raise ModelIOError(f"cannot read model: {e}") from e

    try:
        manifest = json.loads(text)
    except ValueError as e:
        raise FormatError(f"{manifest_path} is not JSON: {e}") from e
    if not isinstance(manifest, dict) or "version" not in manifest:
        raise FormatError(f"{manifest_path} is not a conecast manifest")
    version = manifest["version"]
    # JSON true would compare equal to 1
    if isinstance(version, bool) or version != MANIFEST_VERSION:
        raise FormatError(f"manifest version {version!r} not supported (reader: {MANIFEST_VERSION})")
    try:
        input_shape = tuple(int(d) for d in manifest["input_shape"])
        entries = list(manifest["layers"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest missing input_shape/layers ({e})") from e

    layers = []
    declared = 0
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise FormatError(f"layer {index} is not an object")
        layer, size = _parse_layer(index, entry, blob)
        layers.append(layer)
        declared += size
    if declared != len(blob):
        raise SizeMismatch(f"blob has {len(blob)} bytes but the manifest declares {declared}")

    spec = validate(NetworkSpec(input_shape=input_shape, layers=tuple(layers)))
    logger.info(f"Loaded model {manifest_path}: input {spec.input_shape}, {len(layers)} layers")
    return spec
