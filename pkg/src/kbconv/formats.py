"""Binary file formats: KBOF offset fields and KBTN tensors.

Both are little-endian with a 4-byte ASCII magic and a u32 version.

KBOF: "KBOF", version=1, u32 H, W, kh, kw, then H*W*kh*kw*2 float32
values in row-major [v][u][i][j][(du, dv)] order, then H*W validity
flags as u8 (1 = valid anchor).

KBTN: "KBTN", version=1, u32 ndims, u32 dims[ndims], then float32 data
in row-major order.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .kernel import OffsetField

KBOF_MAGIC = b"KBOF"
KBTN_MAGIC = b"KBTN"
VERSION = 1

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def _read_header(fh, magic: bytes) -> None:
    got = _read_exact(fh, 4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    version = int(np.frombuffer(_read_exact(fh, 4, "version"), _U32)[0])
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")


def write_kbof(field: OffsetField, path) -> None:
    """Write an offset field; float64 data is narrowed to float32."""
    dims = np.array(
        [field.height, field.width, field.kh, field.kw], dtype=_U32
    )
    with open(path, "wb") as fh:
        fh.write(KBOF_MAGIC)
        fh.write(np.array([VERSION], dtype=_U32).tobytes())
        fh.write(dims.tobytes())
        fh.write(np.ascontiguousarray(field.data, dtype=_F32).tobytes())
        fh.write(field.valid.astype(np.uint8).tobytes())


def read_kbof(path) -> OffsetField:
    """Read an offset field; float32 data is widened back to float64."""
    with open(path, "rb") as fh:
        _read_header(fh, KBOF_MAGIC)
        h, w, kh, kw = (
            int(v) for v in np.frombuffer(_read_exact(fh, 16, "dims"), _U32)
        )
        n = h * w * kh * kw * 2
        data = np.frombuffer(_read_exact(fh, 4 * n, "offset data"), _F32)
        flags = np.frombuffer(_read_exact(fh, h * w, "validity flags"), np.uint8)
        if fh.read(1):
            raise FormatError("trailing bytes after validity flags")
    if not np.all((flags == 0) | (flags == 1)):
        raise FormatError("validity flags must be 0 or 1")
    return OffsetField(
        data=data.astype(np.float64).reshape(h, w, kh, kw, 2),
        valid=flags.astype(bool).reshape(h, w),
    )


def write_kbtn(array, path) -> None:
    """Write a tensor; any float input is narrowed to float32."""
    arr = np.asarray(array, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(KBTN_MAGIC)
        fh.write(np.array([VERSION], dtype=_U32).tobytes())
        fh.write(np.array([arr.ndim], dtype=_U32).tobytes())
        fh.write(np.array(arr.shape, dtype=_U32).tobytes())
        fh.write(np.ascontiguousarray(arr, dtype=_F32).tobytes())


def read_kbtn(path) -> np.ndarray:
    """Read a tensor as float64 (exact widening of the stored float32)."""
    with open(path, "rb") as fh:
        _read_header(fh, KBTN_MAGIC)
        ndims = int(np.frombuffer(_read_exact(fh, 4, "ndims"), _U32)[0])
        if ndims == 0 or ndims > 8:
            raise FormatError(f"unreasonable tensor rank {ndims}")
        dims = tuple(
            int(v)
            for v in np.frombuffer(_read_exact(fh, 4 * ndims, "dims"), _U32)
        )
        n = int(np.prod(dims))
        data = np.frombuffer(_read_exact(fh, 4 * n, "tensor data"), _F32)
        if fh.read(1):
            raise FormatError("trailing bytes after tensor data")
    return data.astype(np.float64).reshape(dims)
