"""Binary weight archive shared by every module.

Layout (all integers little-endian):

    magic  b"LPAT"
    u16    version (1)
    u32    tensor count
    per tensor:
        u16    name length, then UTF-8 name
        u8     rank, then rank x u32 dims
        u8     dtype tag (0 = f32, 1 = f64)
        raw little-endian row-major payload

Saving the result of a load reproduces the input bytes exactly.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from typing import Mapping

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError

MAGIC = b"LPAT"
VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def dump_bytes(named: Mapping[str, "Tensor | np.ndarray"]) -> bytes:
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(named))]
    for name, value in named.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        if arr.dtype not in _DTYPE_TAGS:
            raise ConfigError(f"{name}: dtype {arr.dtype} not storable")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ConfigError(f"tensor name too long: {name[:32]}...")
        if arr.ndim > 0xFF or any(d > 0xFFFFFFFF for d in arr.shape):
            raise ConfigError(f"{name}: shape {arr.shape} not storable")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(struct.pack("<B", _DTYPE_TAGS[arr.dtype]))
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        chunks.append(np.ascontiguousarray(le).tobytes())
    return b"".join(chunks)


def load_bytes(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise ConfigError("not a weight archive (bad magic)")
    version, count = struct.unpack_from("<HI", view, 4)
    if version != VERSION:
        raise ConfigError(f"unsupported archive version {version}")
    off = 10
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", view, off)
            off += 2
            name = bytes(view[off:off + nlen]).decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", view, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", view, off)
            off += 4 * rank
            (tag,) = struct.unpack_from("<B", view, off)
            off += 1
            if tag not in _TAG_DTYPES:
                raise ConfigError(f"{name}: unknown dtype tag {tag}")
            dt = _TAG_DTYPES[tag]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
            payload = view[off:off + nbytes]
            if len(payload) != nbytes:
                raise ConfigError(f"{name}: archive truncated")
            off += nbytes
            arr = np.frombuffer(payload, dtype=dt).reshape(dims)
            out[name] = arr.astype(dt.newbyteorder("="))
    except struct.error as exc:
        raise ConfigError(f"archive truncated: {exc}") from exc
    if off != len(blob):
        raise ConfigError(f"{len(blob) - off} trailing bytes in archive")
    return out


def save_archive(path, named: Mapping[str, "Tensor | np.ndarray"]) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_bytes(named))


def load_archive(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return load_bytes(fh.read())
