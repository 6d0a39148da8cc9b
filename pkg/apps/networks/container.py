"""Tensor container used for parameters and checkpoints.

File layout (all integers little-endian)::

    magic    4 bytes   b"SRT1"
    version  uint32
    hdr_len  uint64
    header   hdr_len bytes, UTF-8 JSON with sorted keys:
             {"meta": {...},
              "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    payload  raw C-order tensor bytes, in header order
    digest   32 bytes, SHA-256 of everything above

Tensors are written in sorted name order and the header is canonical JSON,
so identical contents always produce identical bytes.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from apps.core.exceptions import CheckpointVersionError, CorruptCheckpointError

MAGIC = b"SRT1"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_DIGEST_SIZE = 32


def _as_array(value):
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().contiguous().numpy()
    array = np.ascontiguousarray(value)
    return array.astype(array.dtype.newbyteorder("<"), copy=False)


def dumps_tensors(tensors, meta=None):
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        array = _as_array(tensors[name])
        raw = array.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": array.dtype.str,
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)

    header = json.dumps(
        {"meta": meta or {}, "tensors": entries}, sort_keys=True, separators=(",", ":")
    ).encode()
    body = _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def loads_tensors(blob):
    """Parse a container. Returns (dict of numpy arrays, meta)."""
    if len(blob) < _PREFIX.size + _DIGEST_SIZE:
        raise CorruptCheckpointError("File is too short to be a checkpoint")
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    magic, version, header_len = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"Bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointVersionError(
            f"Checkpoint version {version} is not supported (expected {VERSION})"
        )
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpointError("Checksum mismatch; the file is truncated or altered")

    start = _PREFIX.size
    try:
        header = json.loads(body[start : start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"Unreadable header: {exc}") from exc

    payload = memoryview(body)[start + header_len :]
    tensors = {}
    for entry in header["tensors"]:
        chunk = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if len(chunk) != entry["nbytes"]:
            raise CorruptCheckpointError(f"Tensor '{entry['name']}' is truncated")
        array = np.frombuffer(chunk, dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = array.reshape(entry["shape"]).copy()
    return tensors, header["meta"]


def save_tensors(path, tensors, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps_tensors(tensors, meta))
    tmp.replace(path)
    return path


def load_tensors(path):
    return loads_tensors(Path(path).read_bytes())
