"""Weight checkpoints in a small little-endian binary layout.

Layout (all integers little-endian)::

    magic      4 bytes   b"SNNW"
    version    uint32    1
    n_tensors  uint32
    per tensor:
        name_len  uint16, then name_len bytes of UTF-8 name
        dtype     uint8   (1 = float32, 2 = float64)
        ndim      uint8
        dims      ndim x uint32
        payload   prod(dims) values, little-endian, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"SNNW"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


def save_weights(path, weights, names=None) -> None:
    names = names or [f"w{i}" for i in range(len(weights))]
    if len(names) != len(weights):
        raise ValidationError("one name per tensor required")
    out = [MAGIC, struct.pack("<II", VERSION, len(weights))]
    for name, w in zip(names, weights):
        w = np.asarray(w)
        code = _CODES.get(w.dtype)
        if code is None:
            raise ValidationError(f"unsupported dtype {w.dtype} for {name}")
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<BB", code, w.ndim) + struct.pack(f"<{w.ndim}I", *w.shape))
        out.append(np.ascontiguousarray(w, dtype=_DTYPES[code]).tobytes())
    Path(path).write_bytes(b"".join(out))


def load_weights(path) -> tuple[list[np.ndarray], list[str]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValidationError(f"{path}: not a weight checkpoint")
    try:
        version, n = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        weights, names = [], []
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            names.append(data[pos:pos + ln].decode())
            pos += ln
            code, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            dt = _DTYPES[code]
            count = int(np.prod(dims, dtype=np.int64))
            if pos + count * dt.itemsize > len(data):
                raise ValidationError(f"{path}: truncated tensor {names[-1]}")
            arr = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(dims)
            weights.append(arr.astype(dt.newbyteorder("="), copy=True))
            pos += count * dt.itemsize
    except (struct.error, KeyError) as exc:
        raise ValidationError(f"{path}: corrupt checkpoint ({exc})") from None
    if pos != len(data):
        raise ValidationError(f"{path}: {len(data) - pos} trailing bytes")
    return weights, names
