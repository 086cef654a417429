"""Checkpoint container.

Layout (little-endian)::

    b"GBCK"  u32 version  u32 config_len  config (UTF-8 JSON, sorted keys)
    u32 n_sections, then per section:
        u16 name_len  name  u32 n_tensors, then per tensor:
            u16 key_len  key  u8 dtype (0=f32, 1=f64, 2=i64, 3=u8)  u8 ndim  ndim*u32 shape  raw data
    b"GBCE"

Sections hold model parameters, Adam moments and step counts, the loss trace
and the torch RNG state. The JSON config holds the architecture, training
hyper-parameters, epochs completed, numpy RNG state and provenance.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"GBCK"
TRAILER = b"GBCE"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_CODES = {v: k for k, v in _DTYPES.items()}


class CheckpointFormatError(ValueError):
    pass


def _to_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu().numpy()
    arr = np.asarray(t)
    if arr.dtype == np.float32:
        return arr.astype("<f4")
    if arr.dtype == np.float64:
        return arr.astype("<f8")
    if arr.dtype == np.uint8:
        return arr
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype("<i8")
    raise TypeError(f"unsupported tensor dtype {arr.dtype}")


def dumps(config: dict, sections: dict[str, dict[str, object]]) -> bytes:
    buf = io.BytesIO()
    cfg = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(sections)))
    for name, tensors in sections.items():
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)) + nb + struct.pack("<I", len(tensors)))
        for key, value in tensors.items():
            arr = np.ascontiguousarray(_to_numpy(value))
            kb = key.encode()
            buf.write(struct.pack("<H", len(kb)) + kb)
            buf.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(arr.tobytes())
    buf.write(TRAILER)
    return buf.getvalue()


def loads(data: bytes, path: str = "<bytes>") -> tuple[dict, dict[str, dict[str, np.ndarray]]]:
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointFormatError(f"{path}: truncated checkpoint at byte {pos}")
        out = data[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointFormatError(f"{path}: not a graspbin checkpoint (bad magic)")
    version, cfg_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    config = json.loads(take(cfg_len).decode())
    (n_sections,) = struct.unpack("<I", take(4))
    sections: dict[str, dict[str, np.ndarray]] = {}
    for _ in range(n_sections):
        (nl,) = struct.unpack("<H", take(2))
        name = take(nl).decode()
        (nt,) = struct.unpack("<I", take(4))
        tensors = {}
        for _ in range(nt):
            (kl,) = struct.unpack("<H", take(2))
            key = take(kl).decode()
            code, ndim = struct.unpack("<BB", take(2))
            if code not in _DTYPES:
                raise CheckpointFormatError(f"{path}: unknown dtype code {code}")
            shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
            dt = _DTYPES[code]
            count = int(np.prod(shape)) if ndim else 1
            tensors[key] = np.frombuffer(take(dt.itemsize * count), dtype=dt).reshape(shape).copy()
        sections[name] = tensors
    if take(4) != TRAILER:
        raise CheckpointFormatError(f"{path}: missing end marker")
    return config, sections


def save(path, config: dict, sections: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(config, sections))
    tmp.replace(path)


def load(path) -> tuple[dict, dict[str, dict[str, np.ndarray]]]:
    return loads(Path(path).read_bytes(), str(path))
