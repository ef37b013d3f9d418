"""Checkpoint container: JSON manifest followed by raw little-endian floats.

Layout::

    b"ISSUECKP"                      8-byte magic
    uint32 little-endian             manifest length in bytes
    manifest                         UTF-8 JSON, sorted keys
    payload                          arrays concatenated in manifest order

The manifest records the format version, model type, config, extra metadata
(vocabularies), each array's name and shape, the payload dtype, its byte
length and SHA-256.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .errors import CheckpointIntegrityError, CheckpointVersionError

MAGIC = b"ISSUECKP"
FORMAT_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def write(path: str | Path, model_type: str, config: dict, arrays: list[tuple[str, np.ndarray]], extra: dict | None = None) -> None:
    dtype = np.dtype(arrays[0][1].dtype).name if arrays else "float32"
    if dtype not in _DTYPES:
        raise TypeError(f"unsupported checkpoint dtype {dtype}")
    payload = b"".join(np.ascontiguousarray(a, dtype=_DTYPES[dtype]).tobytes() for _, a in arrays)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_type": model_type,
        "config": config,
        "extra": extra or {},
        "dtype": dtype,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(head)) + head + payload)


def read(path: str | Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """Return ``(manifest, {name: array})``; verifies size and checksum first."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != MAGIC:
        raise CheckpointIntegrityError(f"{path}: not a checkpoint (bad magic)")
    (n,) = struct.unpack("<I", data[8:12])
    try:
        manifest = json.loads(data[12 : 12 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"{path}: unreadable manifest ({exc})") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    payload = data[12 + n :]
    if len(payload) != manifest["payload_bytes"] or hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise CheckpointIntegrityError(f"{path}: payload checksum mismatch (truncated or corrupt file)")
    dt = np.dtype(_DTYPES[manifest["dtype"]])
    arrays, offset = {}, 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=offset).reshape(shape)
        arrays[entry["name"]] = arr.astype(dt.newbyteorder("="), copy=True)
        offset += count * dt.itemsize
    return manifest, arrays


def model_type(path: str | Path) -> str:
    manifest, _ = read(path)
    return manifest["model_type"]
