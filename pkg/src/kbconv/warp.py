"""Fisheye synthesis from equirectangular panoramas, and rectification.

Equirectangular convention (fixed so tests can be bit-exact): for a
world direction (x, y, z), longitude = atan2(x, z) in (-pi, pi] and
latitude = asin(y) in [-pi/2, pi/2].  Pano row 0 corresponds to
latitude +pi/2, the last row to -pi/2; columns map longitude linearly
with wraparound, column 0 at longitude -pi.  The camera frame follows
the image convention of the projection model (x right, y toward
growing v, z along the optical axis).

Depth maps are treated as Euclidean ray lengths, which are invariant
under reprojection, so synthesis resamples their values unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import Calibration
from .errors import BadAspect, FovExceeded, ShapeMismatch
from .grid import Grid, bilinear_sample, nearest_sample
from .projection import backproject, project


@dataclass(frozen=True)
class Orientation:
    """Camera-from-panorama rotation."""

    rotation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise ShapeMismatch("orientation must be a 3x3 matrix")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-10):
            raise ShapeMismatch("orientation must be orthonormal")
        if not math.isclose(float(np.linalg.det(rot)), 1.0, abs_tol=1e-10):
            raise ShapeMismatch("orientation must be a proper rotation")
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def identity(cls) -> "Orientation":
        return cls(np.eye(3))

    @classmethod
    def yaw_pitch(cls, azimuth: float, elevation: float) -> "Orientation":
        """Yaw about the panorama vertical axis, then pitch; no roll."""
        ca, sa = math.cos(azimuth), math.sin(azimuth)
        ce, se = math.cos(elevation), math.sin(elevation)
        yaw = np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])
        pitch = np.array([[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]])
        return cls(pitch @ yaw)


def random_orientation(rng: np.random.Generator) -> Orientation:
    """Random view: uniform azimuth, elevation within +-45 deg, no roll."""
    azimuth = float(rng.uniform(-math.pi, math.pi))
    elevation = float(rng.uniform(-math.pi / 4, math.pi / 4))
    return Orientation.yaw_pitch(azimuth, elevation)


@dataclass(frozen=True)
class PerspectiveIntrinsics:
    """Pinhole target for rectification."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.fx <= 0 or self.fy <= 0:
            raise ShapeMismatch("perspective dims and focals must be positive")

    @classmethod
    def from_hfov(cls, width: int, height: int, hfov_deg: float) -> "PerspectiveIntrinsics":
        """Square-pixel intrinsics from a horizontal field of view.

        Raises:
            FovExceeded: hfov of 180 degrees or more; a pinhole image
                cannot contain rays at or beyond 90 degrees incidence.
        """
        if not 0.0 < hfov_deg < 180.0:
            raise FovExceeded(
                f"perspective field of view must be below 180 degrees, "
                f"got {hfov_deg:g}; rays at or beyond 90 degrees incidence "
                f"have no pinhole image"
            )
        cx = (width - 1) / 2.0
        cy = (height - 1) / 2.0
        f = cx / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(width=width, height=height, fx=f, fy=f, cx=cx, cy=cy)

    def max_theta(self) -> float:
        """Largest incidence angle over the pixel-center grid."""
        mx = max(abs(0 - self.cx), abs(self.width - 1 - self.cx)) / self.fx
        my = max(abs(0 - self.cy), abs(self.height - 1 - self.cy)) / self.fy
        return math.atan(math.hypot(mx, my))


def valid_mask(calib: Calibration) -> Grid:
    """Binary mask of the fisheye disk (1 inside the field of view).

    The boundary is the ellipse with semi-axes fx*d(fov/2) and
    fy*d(fov/2) around the principal point, inclusive.
    """
    a = calib.fx * calib.fov_radius
    b = calib.fy * calib.fov_radius
    uu = np.arange(calib.width, dtype=np.float64)[None, :]
    vv = np.arange(calib.height, dtype=np.float64)[:, None]
    inside = ((uu - calib.cx) / a) ** 2 + ((vv - calib.cy) / b) ** 2 <= 1.0
    return Grid(inside.astype(np.float64))


def _pano_coords(world: np.ndarray, pano_h: int, pano_w: int):
    """Pano pixel coordinates for world directions of shape (..., 3)."""
    lon = np.arctan2(world[..., 0], world[..., 2])
    lat = np.arcsin(np.clip(world[..., 1], -1.0, 1.0))
    px = np.mod((lon + math.pi) / (2.0 * math.pi) * pano_w, pano_w)
    py = (math.pi / 2.0 - lat) / math.pi * (pano_h - 1)
    return px, py


def _sample_pano(plane: np.ndarray, px, py, interp: str) -> np.ndarray:
    # one extra wrap column lets the shared clamp-mode samplers handle
    # the longitude seam
    padded = np.concatenate([plane, plane[:, :1]], axis=1)
    if interp == "nearest":
        return nearest_sample(padded, px, py, "clamp")
    return bilinear_sample(padded, px, py, "clamp")


def equirect_to_fisheye(
    pano: Grid,
    calib: Calibration,
    orient: Orientation | None = None,
    interp: str = "bilinear",
) -> Grid:
    """Render a calibrated fisheye view of an equirectangular panorama.

    Pixels outside the field-of-view disk are set to zero.  ``interp``
    is "bilinear" for color/depth and "nearest" for label maps.

    Raises:
        BadAspect: the panorama is not a 2:1 equirectangular image.
    """
    if pano.width != 2 * pano.height:
        raise BadAspect(
            f"panorama must be 2:1 equirectangular, got "
            f"{pano.width}x{pano.height}"
        )
    if orient is None:
        orient = Orientation.identity()

    mask = valid_mask(calib).data[0] > 0.5
    vs, us = np.nonzero(mask)
    pixels = np.stack([us.astype(np.float64), vs.astype(np.float64)], axis=-1)
    rays = backproject(pixels, calib)
    world = rays @ orient.rotation  # == orient.rotation.T applied per ray
    px, py = _pano_coords(world, pano.height, pano.width)

    out = np.zeros((pano.channels, calib.height, calib.width), dtype=np.float64)
    for c in range(pano.channels):
        out[c, vs, us] = _sample_pano(pano.data[c], px, py, interp)
    return Grid(out)


def fisheye_to_perspective(
    img: Grid, calib: Calibration, persp: PerspectiveIntrinsics
) -> Grid:
    """Rectify a fisheye image to a pinhole view sharing the camera frame.

    Raises:
        FovExceeded: the target needs rays at or beyond 90 degrees
            incidence or outside the source field of view.
    """
    bound = min(math.pi / 2.0, 0.5 * calib.fov)
    theta_need = persp.max_theta()
    if theta_need >= bound:
        raise FovExceeded(
            f"rectification needs incidence up to "
            f"{math.degrees(theta_need):.2f} deg, but the feasible bound is "
            f"{math.degrees(bound):.2f} deg (rays at or beyond 90 degrees "
            f"have no pinhole image, and the source covers only its own "
            f"field of view)"
        )

    mx = (np.arange(persp.width, dtype=np.float64) - persp.cx) / persp.fx
    my = (np.arange(persp.height, dtype=np.float64) - persp.cy) / persp.fy
    mxx, myy = np.meshgrid(mx, my)
    rays = np.stack([mxx, myy, np.ones_like(mxx)], axis=-1)
    pos = project(rays, calib)

    out = np.empty((img.channels, persp.height, persp.width), dtype=np.float64)
    for c in range(img.channels):
        out[c] = bilinear_sample(img.data[c], pos[..., 0], pos[..., 1], "zero")
    return Grid(out)
