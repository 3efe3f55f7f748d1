"""Checkpoint files: a little-endian named-tensor table plus a JSON sidecar.

Layout::

    b"NNCK" | u32 version | u32 count
    count x ( u16 name_len | name utf-8 | u8 dtype | u8 ndim | u32 shape[ndim] | data )

dtype codes: 0 = float32, 1 = float64, 2 = int64. The sidecar
``<path>.json`` carries the architecture config, seed and any extra metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NNCK"
VERSION = 1
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}
_DTYPES = {v: k for k, v in _CODES.items()}


class CheckpointError(ValueError):
    pass


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def dumps_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))
    return b"".join(parts)


def loads_tensors(raw: bytes) -> dict[str, np.ndarray]:
    if raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 12
    out = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + n].decode("utf-8")
            off += n
            code, ndim = struct.unpack_from("<BB", raw, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            dt = _DTYPES[code].newbyteorder("<")
            size = int(np.prod(shape)) * dt.itemsize
            if off + size > len(raw):
                raise CheckpointError("truncated checkpoint")
            out[name] = np.frombuffer(raw, dtype=dt, count=int(np.prod(shape)), offset=off).reshape(shape).astype(_DTYPES[code])
            off += size
    except (struct.error, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return out


def save(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps_tensors(tensors))
    sidecar_path(path).write_text(json.dumps(meta or {}, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    tensors = loads_tensors(Path(path).read_bytes())
    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return tensors, meta
