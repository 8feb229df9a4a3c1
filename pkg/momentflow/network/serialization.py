"""Manifest + blob container for networks and moment payloads.

Layout: an 8-byte little-endian manifest length, the UTF-8 JSON manifest,
then a blob of little-endian float64 tensors in row-major order. The
manifest records each tensor's shape and byte range and a CRC-64 of the
blob.
"""
import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from crc import Calculator, Crc64

from ..moments.activation_stats import parse_kind
from ..moments.gaussian_layer import GaussianMoments
from ..utils.errors import (
    ChecksumError, DomainError, FormatVersionError, NetworkFormatError, ShapeError, UnsupportedLayerError,
)
from .model import Activation, Conv2D, Dense, Flatten, GaussianDense, NetworkSpec, Unsupported

logger = logging.getLogger(__name__)

NET_SCHEMA = 'momentflow-net/1'
MOMENTS_SCHEMA = 'momentflow-moments/1'
DTYPE = '<f8'
_HEADER = struct.Struct('<Q')
_CRC = Calculator(Crc64.CRC64, optimized=True)

# Layer types the format knows but propagation rejects; validate() reports them
UNSUPPORTED_OPS = ('softmax', 'max_pool2d', 'avg_pool2d', 'batch_norm')

PathLike = Union[str, Path]


def checksum(blob: bytes) -> str:
    return f"{_CRC.checksum(blob):016x}"


def write_container(path: PathLike, schema: str, tensors: List[Tuple[str, np.ndarray]], body: Dict[str, Any]) -> str:
    """Write a container and return the blob checksum"""
    entries = []
    chunks = []
    offset = 0
    for name, value in tensors:
        data = np.ascontiguousarray(value, dtype=DTYPE).tobytes()
        entries.append({'name': name, 'shape': list(np.shape(value)), 'offset': offset, 'nbytes': len(data)})
        chunks.append(data)
        offset += len(data)
    blob = b''.join(chunks)
    manifest = {
        'schema': schema,
        'dtype': DTYPE,
        'blob_bytes': len(blob),
        'checksum': {'algorithm': 'crc-64', 'value': checksum(blob)},
        'tensors': entries,
        'body': body,
    }
    encoded = json.dumps(manifest, sort_keys=True, separators=(',', ':')).encode('utf-8')
    Path(path).write_bytes(_HEADER.pack(len(encoded)) + encoded + blob)
    return manifest['checksum']['value']


def read_container(path: PathLike, schema: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise NetworkFormatError(f"{path}: file too short for a momentflow container")
    (length,) = _HEADER.unpack_from(raw)
    if _HEADER.size + length > len(raw):
        raise NetworkFormatError(f"{path}: manifest length {length} exceeds file size")
    try:
        manifest = json.loads(raw[_HEADER.size:_HEADER.size + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise NetworkFormatError(f"{path}: manifest is not valid JSON ({e})")
    if not isinstance(manifest, dict):
        raise NetworkFormatError(f"{path}: manifest must be a JSON object")

    found = manifest.get('schema')
    if found != schema:
        raise FormatVersionError(f"{path}: expected schema '{schema}', found '{found}'")
    if manifest.get('dtype') != DTYPE:
        raise FormatVersionError(f"{path}: unsupported dtype {manifest.get('dtype')!r}")

    blob = raw[_HEADER.size + length:]
    stamp = manifest.get('checksum')
    if not isinstance(stamp, dict):
        raise NetworkFormatError(f"{path}: manifest 'checksum' must be an object, got {type(stamp).__name__}")
    expected = stamp.get('value')
    if len(blob) != manifest.get('blob_bytes') or checksum(blob) != expected:
        raise ChecksumError(
            f"{path}: blob checksum mismatch ({len(blob)} bytes, manifest says {manifest.get('blob_bytes')})"
        )

    entries = manifest.get('tensors', [])
    body = manifest.get('body', {})
    if not isinstance(entries, list):
        raise ShapeError(f"{path}: manifest 'tensors' must be a list")
    if not isinstance(body, dict):
        raise ShapeError(f"{path}: manifest 'body' must be an object")

    tensors = {}
    for entry in entries:
        try:
            name, shape = entry['name'], [int(v) for v in entry['shape']]
            offset, nbytes = int(entry['offset']), int(entry['nbytes'])
        except (KeyError, TypeError, ValueError):
            raise ShapeError(f"{path}: malformed tensor entry {entry!r}")
        count = math.prod(shape)
        if nbytes != 8 * count or offset < 0 or offset + nbytes > len(blob):
            raise ShapeError(f"{path}: tensor '{name}' shape {shape} does not fit its byte range")
        tensors[name] = np.frombuffer(blob, dtype=DTYPE, count=count, offset=offset).reshape(shape).astype(float)
    return body, tensors


def _tensor(tensors: Dict[str, np.ndarray], name: str, ndim: int, where: str) -> np.ndarray:
    if name not in tensors:
        raise ShapeError(f"{where}: missing tensor '{name}'")
    value = tensors[name]
    if value.ndim != ndim:
        raise ShapeError(f"{where}: tensor '{name}' should be {ndim}-D, got shape {list(value.shape)}")
    return value


def _layer_entry(index: int, layer) -> Dict[str, Any]:
    entry: Dict[str, Any] = {'type': layer.type_name}
    for key in layer.tensors():
        entry[key] = f"layers.{index}.{key}"
    if isinstance(layer, Conv2D):
        entry.update(stride=layer.stride, padding=layer.padding, input_shape=list(layer.input_shape))
    elif isinstance(layer, Flatten):
        entry['input_shape'] = list(layer.input_shape)
    elif isinstance(layer, Activation):
        entry['kind'] = layer.kind.name
    elif isinstance(layer, Unsupported):
        entry = {'type': layer.op, 'params': layer.params}
    return entry


def _layer_from_entry(index: int, entry: Dict[str, Any], tensors: Dict[str, np.ndarray], path):
    where = f"{path}: layer {index}"
    if not isinstance(entry, dict):
        raise ShapeError(f"{where}: layer entry must be an object")
    kind = entry.get('type')
    try:
        if kind == 'dense':
            return Dense(_tensor(tensors, entry['weight'], 2, where), _tensor(tensors, entry['bias'], 1, where))
        if kind == 'gaussian_dense':
            return GaussianDense(
                _tensor(tensors, entry['weight_mean'], 2, where),
                _tensor(tensors, entry['weight_var'], 2, where),
                _tensor(tensors, entry['bias_mean'], 1, where),
                _tensor(tensors, entry['bias_var'], 1, where),
            )
        if kind == 'conv2d':
            return Conv2D(
                _tensor(tensors, entry['kernel'], 4, where),
                _tensor(tensors, entry['bias'], 1, where),
                entry['stride'],
                entry['padding'],
                entry['input_shape'],
            )
        if kind == 'flatten':
            return Flatten(entry['input_shape'])
        if kind == 'activation':
            return Activation(parse_kind(entry['kind']))
    except KeyError as e:
        raise ShapeError(f"{where}: missing field {e}")
    except DomainError as e:
        raise ShapeError(f"{where}: {e}")
    except (TypeError, ValueError) as e:
        raise ShapeError(f"{where}: malformed layer entry ({e})")
    if kind in UNSUPPORTED_OPS:
        params = entry.get('params', {})
        if not isinstance(params, dict):
            raise ShapeError(f"{where}: 'params' must be an object")
        return Unsupported(kind, dict(params))
    raise UnsupportedLayerError(str(kind), index)


def save(net: NetworkSpec, path: PathLike) -> str:
    body = {
        'name': net.name,
        'seed': net.seed,
        'input_shape': list(net.input_shape),
        'params': net.params,
        'layers': [_layer_entry(i, layer) for i, layer in enumerate(net.layers)],
    }
    digest = write_container(path, NET_SCHEMA, list(net.tensors()), body)
    logger.debug("saved %s (%d layers) to %s", net.name, len(net), path)
    return digest


def load(path: PathLike) -> NetworkSpec:
    body, tensors = read_container(path, NET_SCHEMA)
    entries = body.get('layers')
    if not isinstance(entries, list) or 'input_shape' not in body:
        raise ShapeError(f"{path}: manifest body lacks 'layers' or 'input_shape'")
    layers = tuple(_layer_from_entry(i, entry, tensors, path) for i, entry in enumerate(entries))
    try:
        return NetworkSpec(
            layers, body['input_shape'], name=body.get('name', 'network'),
            seed=body.get('seed'), params=body.get('params', {}),
        )
    except DomainError as e:
        raise ShapeError(f"{path}: {e}")
    except (TypeError, ValueError) as e:
        raise ShapeError(f"{path}: malformed network body ({e})")


def save_moments(path: PathLike, snapshots: List[Tuple[str, GaussianMoments]], meta: Dict[str, Any] = None) -> str:
    """Write one or more labelled moment snapshots"""
    tensors = []
    entries = []
    for index, (label, moments) in enumerate(snapshots):
        tensors.append((f"snapshots.{index}.mean", moments.mean))
        tensors.append((f"snapshots.{index}.cov", moments.cov))
        entries.append({'label': label, 'mean': f"snapshots.{index}.mean", 'cov': f"snapshots.{index}.cov"})
    return write_container(path, MOMENTS_SCHEMA, tensors, {'snapshots': entries, 'meta': meta or {}})


def load_moments(path: PathLike) -> List[Tuple[str, GaussianMoments]]:
    body, tensors = read_container(path, MOMENTS_SCHEMA)
    entries = body.get('snapshots', [])
    if not isinstance(entries, list):
        raise ShapeError(f"{path}: manifest body 'snapshots' must be a list")
    snapshots = []
    for index, entry in enumerate(entries):
        where = f"{path}: snapshot {index}"
        if not isinstance(entry, dict):
            raise ShapeError(f"{where}: snapshot entry must be an object")
        try:
            mean = _tensor(tensors, entry['mean'], 1, where)
            cov = _tensor(tensors, entry['cov'], 2, where)
            snapshots.append((entry.get('label', str(index)), GaussianMoments(mean, cov)))
        except KeyError as e:
            raise ShapeError(f"{where}: missing field {e}")
        except DomainError as e:
            raise ShapeError(f"{where}: {e}")
        except TypeError as e:
            raise ShapeError(f"{where}: malformed snapshot entry ({e})")
    if not snapshots:
        raise ShapeError(f"{path}: no moment snapshots")
    return snapshots
