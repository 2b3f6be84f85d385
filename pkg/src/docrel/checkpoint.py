"""Self-describing binary checkpoint container.

Layout (all integers little-endian):

    magic "DRELCKP1"
    sha256 of the config text (32 bytes)
    u32 config length, config text (utf-8)
    u32 meta length, meta JSON (utf-8)
    u32 record count, then per record:
        u16 name length, name (utf-8)
        u8 dtype code (0 = float64, 1 = float32)
        u8 ndim, ndim x u32 dims
        raw little-endian IEEE-754 values

Round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"DRELCKP1"

_DTYPE_CODES = {0: "<f8", 1: "<f4"}
_DTYPE_OF = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


def config_digest(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    config_text: str
    meta: dict

    @property
    def digest(self) -> str:
        return config_digest(self.config_text)


def save_checkpoint(path, arrays: dict[str, np.ndarray], config_text: str, meta: dict | None = None) -> None:
    meta_blob = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    config_blob = config_text.encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += hashlib.sha256(config_blob).digest()
    out += struct.pack("<I", len(config_blob))
    out += config_blob
    out += struct.pack("<I", len(meta_blob))
    out += meta_blob
    out += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype not in _DTYPE_OF:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for parameter {name!r}")
        name_blob = name.encode("utf-8")
        out += struct.pack("<H", len(name_blob))
        out += name_blob
        out += struct.pack("<BB", _DTYPE_OF[arr.dtype], arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype(f"<f{arr.dtype.itemsize}", copy=False).tobytes(order="C")
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(MAGIC))) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    stored_digest = bytes(take(32))
    (config_len,) = struct.unpack("<I", take(4))
    config_text = bytes(take(config_len)).decode("utf-8")
    if hashlib.sha256(config_text.encode("utf-8")).digest() != stored_digest:
        raise CheckpointError(f"{path}: config digest mismatch (corrupted file)")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _DTYPE_CODES:
            raise CheckpointError(f"{path}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = np.dtype(_DTYPE_CODES[code])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        arr = np.frombuffer(take(nbytes), dtype=dtype).reshape(shape).copy()
        arrays[name] = arr
    if pos != len(view):
        raise CheckpointError(f"{path}: trailing bytes after records")
    return Checkpoint(arrays=arrays, config_text=config_text, meta=meta)
