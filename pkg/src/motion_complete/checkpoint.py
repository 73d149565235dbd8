"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"MCCKPT\\x00\\x01"
    8       4     uint32 format version
    12      8     uint64 header length H in bytes
    20      H     UTF-8 JSON header
    20+H    ...   float32 little-endian payload

The header holds ``config`` (model hyperparameters), ``tensors`` (a list of
``{name, shape, offset, count}`` where ``offset`` and ``count`` are in
float32 elements from the start of the payload), and the optional
``norm_stats``, ``feature_stats``, ``skeleton`` and ``meta`` entries.
"""

import json
import os
import struct

import numpy as np

from .data import NormStats
from .exceptions import CheckpointError
from .model import CompletionTransformer, ModelConfig, param_shapes
from .skeleton import Skeleton

MAGIC = b"MCCKPT\x00\x01"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_FLOAT = np.dtype("<f4")


def _skeleton_dict(skel):
    return {"parents": list(skel.parents), "offsets": skel.offsets.tolist(), "names": list(skel.names)}


def dumps(model, meta=None):
    """Serialize a :class:`CompletionTransformer` to bytes."""
    tensors, chunks, offset = [], [], 0
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name].data, dtype=_FLOAT)
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": arr.size})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = {
        "version": VERSION,
        "config": model.config.to_dict(),
        "tensors": tensors,
        "norm_stats": model.norm_stats.to_dict() if model.norm_stats is not None else None,
        "feature_stats": model.feature_stats.to_dict(),
        "skeleton": _skeleton_dict(model.skeleton) if model.skeleton is not None else None,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + b"".join(chunks)


def loads(buf):
    """Inverse of :func:`dumps`; returns ``(model, meta)``."""
    buf = bytes(buf)
    if len(buf) < _PREFIX.size:
        raise CheckpointError("file too short for a checkpoint")
    magic, version, n = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size + n
    try:
        header = json.loads(buf[_PREFIX.size:start].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from exc
    payload = np.frombuffer(buf, dtype=_FLOAT, offset=start) if len(buf) > start else np.zeros(0, _FLOAT)
    if (len(buf) - start) % _FLOAT.itemsize:
        raise CheckpointError("payload is not a whole number of float32 values")
    expected = param_shapes(config)
    params = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if expected.get(name) != shape:
            raise CheckpointError(f"{name}: shape {shape} does not match the config")
        lo, hi = entry["offset"], entry["offset"] + entry["count"]
        if entry["count"] != int(np.prod(shape)) or hi > payload.size:
            raise CheckpointError(f"{name}: payload range out of bounds")
        params[name] = payload[lo:hi].astype(np.float32).reshape(shape)
    missing = set(expected) - set(params)
    if missing:
        raise CheckpointError(f"missing tensors: {sorted(missing)}")
    skel = header.get("skeleton")
    model = CompletionTransformer(
        config,
        params=params,
        feature_stats=NormStats.from_dict(header["feature_stats"]),
        norm_stats=NormStats.from_dict(header["norm_stats"]) if header.get("norm_stats") else None,
        skeleton=Skeleton(tuple(skel["parents"]), skel["offsets"], tuple(skel["names"])) if skel else None,
    )
    return model, header.get("meta", {})


def save(path, model, meta=None):
    data = dumps(model, meta)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
