"""Versioned binary container shared by checkpoints and day-block files.

Layout::

    magic (8 bytes) | header length (u64 LE) | header JSON (utf-8)
    | array payloads (little-endian, C order) | sha256 of everything before

The header carries ``kind``, ``version``, free-form metadata and one entry
per array with its dtype, shape and byte offset into the payload region.
Writing is deterministic: identical inputs give identical bytes.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError

MAGIC = b"INCCTR\x00\x01"
_DIGEST = 32


def dumps_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode(kind, version, meta, arrays):
    entries = []
    payload = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes(order="C")
        entries.append({
            "name": name,
            "dtype": le.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        payload.append(raw)
        offset += len(raw)
    header = dumps_json({"kind": kind, "version": version, "meta": meta, "arrays": entries}).encode()
    body = MAGIC + struct.pack("<Q", len(header)) + header + b"".join(payload)
    return body + hashlib.sha256(body).digest()


def decode(data, kind=None):
    """Parse container bytes, verifying the trailing checksum first."""
    if len(data) < len(MAGIC) + 8 + _DIGEST or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not an incctr container (bad magic)")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("container checksum mismatch (file corrupted or truncated)")
    (hlen,) = struct.unpack_from("<Q", body, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(body[start:start + hlen].decode())
    if kind is not None and header.get("kind") != kind:
        raise FormatError(f"expected a {kind!r} container, found {header.get('kind')!r}")
    base = start + hlen
    arrays = {}
    for e in header["arrays"]:
        lo = base + e["offset"]
        buf = body[lo:lo + e["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return header["version"], header["meta"], arrays


def write(path, kind, version, meta, arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(kind, version, meta, arrays))


def read(path, kind=None):
    return decode(Path(path).read_bytes(), kind=kind)
