"""Binary tensor files for caching compiled networks between runs.

Layout (little-endian): magic ``b"MPOQ"``, format version (u32), kind code
(u32), grid rows and columns (u32 each; columns is 1 for chains), then for every
site its rank (u32) and shape (u32 each), followed by all payloads as
``complex128`` in site order, C-contiguous.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"MPOQ"
VERSION = 1
KINDS = {"mpo": 1, "mps": 2, "lpdo": 3, "pepo": 4}


class FormatError(ValueError):
    pass


def save_tensors(path, tensors: Sequence[np.ndarray], kind: str = "mpo", grid: tuple[int, int] | None = None) -> None:
    """Write site tensors; ``grid`` gives the layout of 2D networks."""
    rows, cols = grid if grid is not None else (len(tensors), 1)
    if rows * cols != len(tensors):
        raise ValueError(f"grid {rows}x{cols} does not hold {len(tensors)} tensors")
    header = bytearray(MAGIC)
    header += struct.pack("<IIII", VERSION, _kind_code(kind), rows, cols)
    for t in tensors:
        header += struct.pack("<I", t.ndim)
        header += struct.pack(f"<{t.ndim}I", *t.shape)
    with open(Path(path), "wb") as fh:
        fh.write(bytes(header))
        for t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def _kind_code(kind: str) -> int:
    try:
        return KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown tensor kind {kind!r}; expected one of {sorted(KINDS)}") from None


def load_tensors(path, kind: str = "mpo", with_grid: bool = False):
    """Read tensors written by :func:`save_tensors`.

    Raises:
        FormatError: On a bad magic number, version, kind, or a truncated file.
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError("not an MPOQ tensor file")
    try:
        version, code, rows, cols = struct.unpack_from("<IIII", data, 4)
        if version != VERSION:
            raise FormatError(f"unsupported format version {version}")
        if code != _kind_code(kind):
            raise FormatError(f"file holds kind code {code}, expected {kind!r}")
        off = 20
        shapes = []
        for _ in range(rows * cols):
            (ndim,) = struct.unpack_from("<I", data, off)
            off += 4
            shapes.append(struct.unpack_from(f"<{ndim}I", data, off))
            off += 4 * ndim
        tensors = []
        for shape in shapes:
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<c16", count=count, offset=off).reshape(shape)
            tensors.append(arr.astype(complex))
            off += 16 * count
    except (struct.error, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"truncated or corrupt tensor file: {exc}") from exc
    if off != len(data):
        raise FormatError("trailing bytes after payload")
    return (tensors, (rows, cols)) if with_grid else tensors
