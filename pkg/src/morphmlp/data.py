"""Synthetic desk-scale datasets and the MDAT1 dataset file format.

``chunk-parity`` images: one designated row of 4x4 patches carries a fixed
random +-1 texture whose sign in the left half and in the right half sets
the class (4 classes). Everything else is noise. Because the texture is
position-specific, a model needs position-aware token mixing along the row.

``frame-order`` clips: a bright patch sits at one position in the first
half of the clip and at another position, in the same row, in the second
half. The class is the direction of motion. Each clip of one class is the
time reversal of a clip of the other, so any model that treats frames
symmetrically is at chance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from typing import Iterator, Optional, Union

import numpy as np

MDAT_MAGIC = b"MDAT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "synthetic"  # "synthetic" | "file"
    kind: str = "chunk-parity"
    path: Optional[str] = None
    size: int = 16
    frames: int = 4
    batch_size: int = 32
    seed: int = 0
    split: str = "train"
    noise: float = 1.0
    shuffle_frames: bool = False

    @property
    def num_classes(self) -> int:
        if self.source == "file":
            return int(read_dataset(self.path)[1].max()) + 1
        return {"chunk-parity": 4, "frame-order": 2}[self.kind]


def _split_offset(split: str) -> int:
    return {"train": 0, "val": 1_000_003, "test": 2_000_003}.get(split, 0)


def chunk_parity_batch(rng: np.random.Generator, batch: int, size: int = 16, patch: int = 4,
                       row: int = 1, amplitude: float = 1.0, noise: float = 1.0,
                       template_seed: int = 1234) -> tuple[np.ndarray, np.ndarray]:
    """Images ``[B, size, size, 3]`` and labels in ``{0..3}``."""
    template = np.random.default_rng(template_seed).choice([-1.0, 1.0], size=(patch, size, 3))
    half = size // 2
    sa = rng.choice([-1.0, 1.0], size=batch)
    sb = rng.choice([-1.0, 1.0], size=batch)
    x = noise * rng.standard_normal((batch, size, size, 3))
    rows = slice(row * patch, (row + 1) * patch)
    x[:, rows, :half] += amplitude * sa[:, None, None, None] * template[None, :, :half]
    x[:, rows, half:] += amplitude * sb[:, None, None, None] * template[None, :, half:]
    labels = 2 * (sa > 0) + (sb > 0)
    return x.astype(np.float32), labels.astype(np.int64)


def frame_order_batch(rng: np.random.Generator, batch: int, size: int = 16, frames: int = 4,
                      patch: int = 4, noise: float = 0.1,
                      shuffle_frames: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Clips ``[B, size, size, frames, 3]`` and labels (1 = moves right)."""
    grid = size // patch
    x = noise * rng.standard_normal((batch, size, size, frames, 3))
    labels = np.empty(batch, dtype=np.int64)
    half = frames // 2
    for b in range(batch):
        r = rng.integers(grid)
        c0, c1 = rng.choice(grid, size=2, replace=False)
        labels[b] = int(c1 > c0)
        order = np.arange(frames)
        if shuffle_frames:
            order = rng.permutation(frames)
        for f in range(frames):
            c = c0 if order[f] < half else c1
            x[b, r * patch:(r + 1) * patch, c * patch:(c + 1) * patch, f, :] += 1.0
    return x.astype(np.float32), labels


def synth_batches(spec: DatasetSpec) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless deterministic stream of fresh batches."""
    rng = np.random.default_rng(spec.seed + _split_offset(spec.split))
    while True:
        if spec.kind == "chunk-parity":
            yield chunk_parity_batch(rng, spec.batch_size, spec.size, noise=spec.noise)
        elif spec.kind == "frame-order":
            yield frame_order_batch(rng, spec.batch_size, spec.size, spec.frames,
                                    noise=spec.noise, shuffle_frames=spec.shuffle_frames)
        else:
            raise ValueError(f"unknown synthetic dataset {spec.kind!r}")


def file_batches(spec: DatasetSpec) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Cycle over an MDAT1 file in epochs shuffled by ``spec.seed``."""
    x, y = read_dataset(spec.path)
    rng = np.random.default_rng(spec.seed)
    while True:
        order = rng.permutation(len(y))
        for i in range(0, len(order) - spec.batch_size + 1, spec.batch_size):
            idx = order[i:i + spec.batch_size]
            yield x[idx], y[idx]


def batches(spec: DatasetSpec) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    if spec.source == "file":
        return file_batches(spec)
    if spec.source == "synthetic":
        return synth_batches(spec)
    raise ValueError(f"unknown dataset source {spec.source!r}")


def write_dataset(path: Union[str, PathLike], samples: np.ndarray, labels: np.ndarray) -> None:
    """Header ``MDAT1, u8 dtype, u8 ndim, u32 extents..., u32 count`` + payload + i32 labels."""
    samples = np.asarray(samples)
    labels = np.asarray(labels)
    if samples.dtype not in _CODES:
        raise ValueError(f"unsupported sample dtype {samples.dtype}")
    if labels.shape != (samples.shape[0],):
        raise ValueError("one label per sample is required")
    shape = samples.shape[1:]
    with open(path, "wb") as fh:
        fh.write(MDAT_MAGIC)
        fh.write(struct.pack("<BB", _CODES[samples.dtype], len(shape)))
        fh.write(struct.pack(f"<{len(shape)}I", *shape))
        fh.write(struct.pack("<I", samples.shape[0]))
        fh.write(np.ascontiguousarray(samples, dtype=_DTYPES[_CODES[samples.dtype]]).tobytes())
        fh.write(np.ascontiguousarray(labels, dtype="<i4").tobytes())


def read_dataset(path: Union[str, PathLike]) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != MDAT_MAGIC:
        raise ValueError(f"{path}: not an MDAT1 file")
    code, ndim = struct.unpack_from("<BB", data, 5)
    off = 7
    shape = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    dtype = _DTYPES[code]
    n = count * int(np.prod(shape, dtype=np.int64))
    samples = np.frombuffer(data, dtype=dtype, count=n, offset=off).reshape((count, *shape))
    off += n * dtype.itemsize
    labels = np.frombuffer(data, dtype="<i4", count=count, offset=off)
    if off + 4 * count != len(data):
        raise ValueError(f"{path}: size does not match header")
    return samples.astype(dtype.newbyteorder("=")), labels.astype(np.int64)
