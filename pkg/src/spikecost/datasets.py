"""IDX (MNIST) reader/writer.

The IDX layout is a 4-byte magic ``0x00 0x00 <dtype> <ndim>``, then ``ndim``
big-endian uint32 dimensions, then the raw row-major payload. Files ending
in ``.gz`` are transparently (de)compressed.

Expected dataset directory layout::

    <root>/train-images-idx3-ubyte[.gz]
    <root>/train-labels-idx1-ubyte[.gz]
    <root>/t10k-images-idx3-ubyte[.gz]
    <root>/t10k-labels-idx1-ubyte[.gz]
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

_DTYPES = {
    0x08: np.dtype(np.uint8),
    0x09: np.dtype(np.int8),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_CODES = {np.dtype(v).newbyteorder("=") if v.itemsize > 1 else v: k for k, v in _DTYPES.items()}


def _open(path: Path, mode: str):
    return gzip.open(path, mode) if str(path).endswith(".gz") else open(path, mode)


def read_idx(path) -> np.ndarray:
    path = Path(path)
    with _open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise ValidationError(f"{path}: not an IDX file (bad magic)")
    code, ndim = data[2], data[3]
    if code not in _DTYPES:
        raise ValidationError(f"{path}: unknown IDX dtype code 0x{code:02x}")
    header = 4 + 4 * ndim
    dims = struct.unpack(f">{ndim}I", data[4:header])
    dtype = _DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) - header != expected:
        raise ValidationError(f"{path}: payload is {len(data) - header} bytes, header implies {expected}")
    arr = np.frombuffer(data, dtype=dtype, offset=header).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    key = arr.dtype.newbyteorder("=") if arr.dtype.itemsize > 1 else arr.dtype
    if key not in _CODES:
        raise ValidationError(f"dtype {arr.dtype} has no IDX code")
    code = _CODES[key]
    header = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    payload = arr.astype(_DTYPES[code]).tobytes()
    with _open(Path(path), "wb") as fh:
        fh.write(header + payload)


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(f"{root / stem}[.gz] not found")


def load_mnist(root, split: str = "train", limit: int | None = None):
    """Return ``(images, labels)`` with images as float64 in [0, 1], shape ``(N, 1, 28, 28)``."""
    root = Path(root)
    prefix = {"train": "train", "test": "t10k"}[split]
    images = read_idx(_find(root, f"{prefix}-images-idx3-ubyte"))
    labels = read_idx(_find(root, f"{prefix}-labels-idx1-ubyte"))
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise ValidationError(f"{root}: image/label files disagree ({images.shape} vs {labels.shape})")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return images[:, None].astype(np.float64) / 255.0, labels.astype(np.int64)
