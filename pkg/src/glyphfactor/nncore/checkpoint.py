"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic    6 bytes   b"GFCKPT"
    version  uint16    currently 1
    count    uint32    number of tensors
    then per tensor, in insertion order:
        name_len uint16, name (utf-8), ndim uint8, dims uint32 * ndim,
        data float64 little-endian, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .layers import Module

MAGIC = b"GFCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: Iterable[tuple[str, np.ndarray]] | dict) -> None:
    items = list(tensors.items()) if isinstance(tensors, dict) else list(tensors)
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate parameter paths")
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(items))]
    for name, arr in items:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:6] != MAGIC:
        raise CheckpointError(f"{path}: not a glyphfactor checkpoint")
    version, count = struct.unpack_from("<HI", buf, 6)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(shape)
            off += 8 * size
            out[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint") from exc
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return out


def module_state(module: Module) -> dict[str, np.ndarray]:
    return {name: p.value.copy() for name, p in module.named_parameters()}


def load_state(module: Module, state: dict[str, np.ndarray]) -> None:
    params = dict(module.named_parameters())
    missing = params.keys() - state.keys()
    extra = state.keys() - params.keys()
    if missing or extra:
        raise CheckpointError(f"parameter mismatch: missing={sorted(missing)[:5]} unexpected={sorted(extra)[:5]}")
    for name, p in params.items():
        if state[name].shape != p.value.shape:
            raise CheckpointError(f"{name}: shape {state[name].shape} != {p.value.shape}")
        p.value[...] = state[name]
