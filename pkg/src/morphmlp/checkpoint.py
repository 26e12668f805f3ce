"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"MORPHNET1"
    u32 count
    count x { u16 name_len, name (utf-8), u8 dtype (0=f32, 1=f64), u8 ndim, ndim x u32 extent }
    payloads, concatenated in manifest order, raw little-endian
"""

from __future__ import annotations

import io
import struct
from os import PathLike
from typing import BinaryIO, Union

import numpy as np

from .nn import Module

MAGIC = b"MORPHNET1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def dumps(state: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    write_state(buf, state)
    return buf.getvalue()


def loads(data: bytes) -> dict[str, np.ndarray]:
    return read_state(io.BytesIO(data))


def write_state(fh: BinaryIO, state: dict[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<I", len(state)))
    arrays = []
    for name, arr in state.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        arrays.append(arr)
    for arr in arrays:
        fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def read_state(fh: BinaryIO) -> dict[str, np.ndarray]:
    if _read_exact(fh, len(MAGIC)) != MAGIC:
        raise CheckpointError("not a MORPHNET1 checkpoint")
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    manifest = []
    for _ in range(count):
        (n,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, n).decode("utf-8")
        code, ndim = struct.unpack("<BB", _read_exact(fh, 2))
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
        manifest.append((name, _DTYPES[code], shape))
    state = {}
    for name, dtype, shape in manifest:
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(_read_exact(fh, nbytes), dtype=dtype).reshape(shape)
        state[name] = arr.astype(dtype.newbyteorder("="))
    if fh.read(1):
        raise CheckpointError("trailing bytes after payload")
    return state


def save(model_or_state: Union[Module, dict], path: Union[str, PathLike]) -> None:
    state = model_or_state.state_dict() if isinstance(model_or_state, Module) else model_or_state
    with open(path, "wb") as fh:
        write_state(fh, state)


def load(path: Union[str, PathLike]) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return read_state(fh)
