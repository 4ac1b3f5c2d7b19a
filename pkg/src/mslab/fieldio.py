"""Binary field files.

Layout: magic "MSLF" (4 bytes), version u16 = 1, dtype u8 (0 = float64,
1 = complex128), ndim u8, dims as u32 little-endian per axis, then raw
little-endian values in row-major order (last axis fastest).
"""

import struct

import numpy as np

MAGIC = b"MSLF"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


class FieldFormatError(ValueError):
    pass


def write_field(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values)
    if np.iscomplexobj(values):
        code, dtype = 1, _DTYPES[1]
    else:
        code, dtype = 0, _DTYPES[0]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HBB", VERSION, code, values.ndim))
        fh.write(struct.pack(f"<{values.ndim}I", *values.shape))
        fh.write(values.astype(dtype).tobytes(order="C"))


def read_field(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FieldFormatError(f"bad magic {magic!r}")
        version, code, ndim = struct.unpack("<HBB", fh.read(4))
        if version != VERSION:
            raise FieldFormatError(f"unsupported version {version}")
        if code not in _DTYPES:
            raise FieldFormatError(f"unknown dtype code {code}")
        dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        count = int(np.prod(dims))
        raw = fh.read(count * _DTYPES[code].itemsize)
        if len(raw) != count * _DTYPES[code].itemsize:
            raise FieldFormatError("truncated field file")
        return np.frombuffer(raw, dtype=_DTYPES[code]).reshape(dims).copy()
