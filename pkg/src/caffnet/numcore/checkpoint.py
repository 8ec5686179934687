"""Binary checkpoint container.

Layout (little-endian)::

    b"CKPT"  u32 version
    u32 len  UTF-8 key=value config text
    repeated until EOF:
        u32 len  UTF-8 tensor name
        u8 dtype tag (0 = f32, 1 = f64)
        u32 rank, rank * u32 dims
        raw values, row-major
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config_text, tensors):
    """Write ``tensors`` (name -> array) with a key=value config block."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    cfg = config_text.encode("utf-8")
    chunks += [struct.pack("<I", len(cfg)), cfg]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype not in _TAGS:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        tag = _TAGS[arr.dtype]
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<BI", tag, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(_DTYPES[tag], copy=False).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    """Return ``(config_text, {name: array})``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        out = buf[pos : pos + n]
        pos += n
        return out

    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (clen,) = struct.unpack("<I", take(4))
    config_text = take(clen).decode("utf-8")
    tensors = {}
    while pos < len(buf):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        tag, rank = struct.unpack("<BI", take(5))
        if tag not in _DTYPES:
            raise CheckpointError(f"{path}: tensor {name!r} has unknown dtype tag {tag}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        dt = _DTYPES[tag]
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(count * dt.itemsize), dtype=dt).reshape(dims)
        tensors[name] = data.astype(dt.newbyteorder("="))
    return config_text, tensors
