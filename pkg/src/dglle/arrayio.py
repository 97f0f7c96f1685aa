"""Portable array container and checkpoint file I/O.

Array container layout (all integers little-endian):

    magic   7 bytes   b"DGARR1\\n"
    dlen    uint8     length of the dtype tag
    dtype   dlen bytes ascii numpy dtype string, e.g. "<f4", "<f8"
    ndim    uint32
    dims    ndim * uint64
    data    raw C-order little-endian payload

Checkpoint layout: magic b"DGCKPT1\\n", uint64 header length, UTF-8 JSON
header (version, config hash, fusion mode, ordered array names), then each
named array in container framing, in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ValidationError

ARRAY_MAGIC = b"DGARR1\n"
CKPT_MAGIC = b"DGCKPT1\n"
CKPT_VERSION = 1


def array_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    arr = arr.astype(dt, copy=False)
    tag = arr.dtype.str.encode("ascii")
    head = ARRAY_MAGIC + struct.pack("<B", len(tag)) + tag
    head += struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return head + arr.tobytes(order="C")


def array_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one container from ``buf`` at ``offset``; returns (array, next offset)."""
    if buf[offset : offset + len(ARRAY_MAGIC)] != ARRAY_MAGIC:
        raise ValidationError(f"bad array container magic at offset {offset}")
    p = offset + len(ARRAY_MAGIC)
    (dlen,) = struct.unpack_from("<B", buf, p)
    p += 1
    tag = buf[p : p + dlen].decode("ascii")
    p += dlen
    (ndim,) = struct.unpack_from("<I", buf, p)
    p += 4
    dims = struct.unpack_from(f"<{ndim}Q", buf, p) if ndim else ()
    p += 8 * ndim
    dt = np.dtype(tag)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    nbytes = count * dt.itemsize
    data = np.frombuffer(buf[p : p + nbytes], dtype=dt).reshape(dims).copy()
    return data, p + nbytes


def save_array(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(array_to_bytes(arr))


def load_array(path: str | Path) -> np.ndarray:
    arr, _ = array_from_bytes(Path(path).read_bytes())
    return arr


def save_checkpoint(
    path: str | Path,
    arrays: dict[str, np.ndarray],
    *,
    config_hash: str,
    mode: str,
    extra: dict | None = None,
) -> None:
    names = list(arrays)
    header = {
        "version": CKPT_VERSION,
        "config_hash": config_hash,
        "mode": mode,
        "names": names,
        "extra": extra or {},
    }
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [CKPT_MAGIC, struct.pack("<Q", len(hjson)), hjson]
    chunks += [array_to_bytes(arrays[n]) for n in names]
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: cannot read checkpoint: {e}") from e
    if buf[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    p = len(CKPT_MAGIC)
    (hlen,) = struct.unpack_from("<Q", buf, p)
    p += 8
    header = json.loads(buf[p : p + hlen].decode("utf-8"))
    if header.get("version") != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    p += hlen
    arrays = {}
    for name in header["names"]:
        arrays[name], p = array_from_bytes(buf, p)
    return header, arrays
