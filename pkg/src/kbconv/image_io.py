"""Image readers/writers: binary PPM/PGM plus optional PNG.

PPM (P6, maxval 255) carries color; PGM (P5) carries single-channel
data.  Depth maps use 16-bit PGM with a fixed-point scale of 1/512 m
per unit (big-endian sample order, as the format prescribes for
maxval > 255).  Label maps use 8- or 16-bit PGM with one class id per
pixel.  PPM/PGM are the canonical formats for bit-exact tests; PNG is
a convenience for the CLI.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import FormatError
from .grid import Grid

# fixed-point depth scale: stored value = meters * DEPTH_SCALE
DEPTH_SCALE = 512.0

_TOKEN = re.compile(rb"^(?:\s|#[^\n]*\n)*(\S+)")


def _read_tokens(buf: bytes, n: int) -> tuple[list[bytes], int]:
    """First n whitespace/comment-delimited tokens and the data offset."""
    tokens = []
    pos = 0
    for _ in range(n):
        m = _TOKEN.match(buf[pos:])
        if not m:
            raise FormatError("truncated image header")
        tokens.append(m.group(1))
        pos += m.end(1)
    # single whitespace byte separates the header from the raster
    return tokens, pos + 1


def _parse_header(buf: bytes, magic: bytes):
    tokens, offset = _read_tokens(buf, 4)
    if tokens[0] != magic:
        raise FormatError(f"bad image magic {tokens[0]!r}, expected {magic!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError("bad image dimensions or maxval")
    return width, height, maxval, offset


def read_ppm(path) -> Grid:
    """Read a binary PPM into a (3, H, W) grid of 0..255 floats."""
    buf = open(path, "rb").read()
    w, h, maxval, offset = _parse_header(buf, b"P6")
    if maxval != 255:
        raise FormatError("only maxval 255 PPM is supported")
    if len(buf) - offset < w * h * 3:
        raise FormatError("truncated PPM raster")
    raster = np.frombuffer(buf, np.uint8, count=w * h * 3, offset=offset)
    return Grid(raster.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64))


def write_ppm(grid: Grid, path) -> None:
    """Write a 3- or 1-channel grid of 0..255 values as binary PPM."""
    data = grid.data
    if data.shape[0] == 1:
        data = np.repeat(data, 3, axis=0)
    if data.shape[0] != 3:
        raise FormatError("PPM needs 1 or 3 channels")
    raster = np.clip(np.rint(data), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (data.shape[2], data.shape[1]))
        fh.write(raster.transpose(1, 2, 0).tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM as a (H, W) integer array (u8 or u16)."""
    buf = open(path, "rb").read()
    w, h, maxval, offset = _parse_header(buf, b"P5")
    item = 2 if maxval > 255 else 1
    if len(buf) - offset < w * h * item:
        raise FormatError("truncated PGM raster")
    if maxval > 255:
        out = np.frombuffer(buf, ">u2", count=w * h, offset=offset).astype(np.uint16)
    else:
        out = np.frombuffer(buf, np.uint8, count=w * h, offset=offset).astype(np.uint8)
    return out.reshape(h, w)


def write_pgm(values: np.ndarray, path, maxval: int = 65535) -> None:
    """Write a (H, W) integer array as binary PGM.

    Samples are big-endian 16-bit when maxval > 255, 8-bit otherwise.
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise FormatError("PGM needs a single channel")
    clipped = np.clip(np.rint(values), 0, maxval)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (values.shape[1], values.shape[0], maxval))
        if maxval > 255:
            fh.write(clipped.astype(">u2").tobytes())
        else:
            fh.write(clipped.astype(np.uint8).tobytes())


def read_depth(path) -> Grid:
    """Read a 16-bit PGM depth map as meters."""
    raw = read_pgm(path)
    return Grid(raw.astype(np.float64) / DEPTH_SCALE)


def write_depth(grid: Grid, path) -> None:
    """Write a depth grid (meters) as fixed-point 16-bit PGM."""
    write_pgm(grid.data[0] * DEPTH_SCALE, path, maxval=65535)


def read_labels(path) -> np.ndarray:
    """Read a label map as an int array of class ids."""
    return read_pgm(path).astype(np.int64)


def write_labels(labels: np.ndarray, path, maxval: int = 255) -> None:
    write_pgm(np.asarray(labels), path, maxval=maxval)


def read_image(path) -> Grid:
    """Read PPM/PGM/PNG by extension into a grid of 0..255 floats."""
    name = str(path).lower()
    if name.endswith(".ppm"):
        return read_ppm(path)
    if name.endswith(".pgm"):
        return Grid(read_pgm(path).astype(np.float64))
    if name.endswith(".png"):
        from PIL import Image

        arr = np.asarray(Image.open(path))
        if arr.ndim == 2:
            return Grid(arr.astype(np.float64))
        return Grid(arr[..., :3].transpose(2, 0, 1).astype(np.float64))
    raise FormatError(f"unsupported image extension: {path}")


def write_image(grid: Grid, path) -> None:
    """Write PPM/PGM/PNG by extension (values treated as 0..255)."""
    name = str(path).lower()
    if name.endswith(".ppm"):
        write_ppm(grid, path)
        return
    if name.endswith(".pgm"):
        write_pgm(np.clip(np.rint(grid.data[0]), 0, 255), path, maxval=255)
        return
    if name.endswith(".png"):
        from PIL import Image

        data = np.clip(np.rint(grid.data), 0, 255).astype(np.uint8)
        if data.shape[0] == 1:
            Image.fromarray(data[0]).save(path)
        else:
            Image.fromarray(data.transpose(1, 2, 0)).save(path)
        return
    raise FormatError(f"unsupported image extension: {path}")
