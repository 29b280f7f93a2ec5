"""Dense channel-major grids and the shared interpolation core.

Every resampling operation in the toolkit (deformable convolution,
panorama synthesis, rectification) funnels through ``bilinear_sample``
or ``nearest_sample`` so coordinate conventions are fixed in one place:
pixel (x, y) addresses column x of row y, with integer coordinates at
pixel centers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

BORDER_POLICIES = ("zero", "clamp")


@dataclass(frozen=True)
class Grid:
    """Channel-major dense array of shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ShapeMismatch(f"grid needs 2 or 3 dims, got {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ShapeMismatch("grid values must be finite")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int) -> np.ndarray:
        return self.data[c]


def _check_border(border: str) -> None:
    if border not in BORDER_POLICIES:
        raise ValueError(f"border must be one of {BORDER_POLICIES}")


def bilinear_sample(plane: np.ndarray, x, y, border: str = "zero") -> np.ndarray:
    """Bilinear interpolation of a single channel plane at (x, y).

    ``zero`` treats out-of-bounds neighbours as 0; ``clamp`` clamps the
    coordinates to the valid range before interpolating.  Exact at
    integer in-bounds coordinates.
    """
    _check_border(border)
    h, w = plane.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    if border == "clamp":
        x = np.clip(x, 0.0, w - 1.0)
        y = np.clip(y, 0.0, h - 1.0)

    x0 = np.floor(x)
    y0 = np.floor(y)
    wx = x - x0
    wy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    if border == "clamp":
        x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x1, 0, w - 1)
        y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y1, 0, h - 1)
        v00 = plane[y0c, x0c]
        v01 = plane[y0c, x1c]
        v10 = plane[y1c, x0c]
        v11 = plane[y1c, x1c]
    else:
        v00 = _gather_zero(plane, y0, x0)
        v01 = _gather_zero(plane, y0, x1)
        v10 = _gather_zero(plane, y1, x0)
        v11 = _gather_zero(plane, y1, x1)

    top = v00 * (1.0 - wx) + v01 * wx
    bot = v10 * (1.0 - wx) + v11 * wx
    return top * (1.0 - wy) + bot * wy


def _gather_zero(plane: np.ndarray, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
    out = np.zeros(np.broadcast(yy, xx).shape, dtype=plane.dtype)
    if np.any(inside):
        yb, xb = np.broadcast_arrays(yy, xx)
        out[inside] = plane[yb[inside], xb[inside]]
    return out


def nearest_sample(plane: np.ndarray, x, y, border: str = "zero") -> np.ndarray:
    """Nearest-neighbour lookup; preserves exact stored values.

    Used for label maps, where blending class ids is meaningless.
    """
    _check_border(border)
    h, w = plane.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xi = np.rint(x).astype(np.int64)
    yi = np.rint(y).astype(np.int64)
    if border == "clamp":
        xi = np.clip(xi, 0, w - 1)
        yi = np.clip(yi, 0, h - 1)
        return plane[yi, xi]
    return _gather_zero(plane, yi, xi)
