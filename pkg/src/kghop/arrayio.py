"""Minimal binary container for named numpy arrays plus a JSON meta block.

Used for serialized graphs, embedding tables, policy checkpoints and rollout
buffers. The layout is fixed and timestamp-free so identical contents always
produce identical bytes:

    magic "KGHOPBIN" | u32 version | u32 meta_len | meta (UTF-8 JSON)
    u32 n_entries
    per entry: u16 name_len | name | u8 dtype_len | dtype str ("<f4", ...)
               u8 ndim | u64 * ndim shape | u64 byte_len | raw C-order bytes

All integers little-endian. Arrays are written in the order given.
"""

import json
import os
import struct

import numpy as np

from .errors import ParseError

MAGIC = b"KGHOPBIN"
VERSION = 1


def save_container(path, meta, arrays):
    """Write `meta` (JSON-serializable dict) and `arrays` (name -> ndarray)."""
    meta_bytes = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes,
              struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        data = arr.astype(dtype, copy=False).tobytes()
        name_b = name.encode("utf-8")
        dt_b = dtype.str.encode("ascii")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", len(dt_b)))
        chunks.append(dt_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        chunks.append(struct.pack("<Q", len(data)))
        chunks.append(data)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def load_container(path):
    """Read a container back as (meta, dict name -> ndarray)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: not a kghop binary container (bad magic)")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise ParseError(f"{path}: truncated container")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals if len(vals) > 1 else vals[0]

    version, meta_len = take("<II")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported container version {version}")
    if off + meta_len > len(blob):
        raise ParseError(f"{path}: truncated meta block")
    try:
        meta = json.loads(blob[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt meta block: {exc}") from exc
    off += meta_len

    arrays = {}
    n_entries = take("<I")
    for _ in range(n_entries):
        name_len = take("<H")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        dt_len = take("<B")
        dtype = np.dtype(blob[off : off + dt_len].decode("ascii"))
        off += dt_len
        ndim = take("<B")
        shape = tuple(take(f"<{ndim}Q")) if ndim > 1 else ((take("<Q"),) if ndim else ())
        byte_len = take("<Q")
        if off + byte_len > len(blob):
            raise ParseError(f"{path}: truncated array {name!r}")
        arr = np.frombuffer(blob[off : off + byte_len], dtype=dtype).reshape(shape).copy()
        off += byte_len
        arrays[name] = arr
    return meta, arrays
