"""Calibration-derived deformable kernel offsets.

The sampling footprint of a convolution kernel is bent to follow the
fisheye distortion in four steps:

  1. lay the kernel out as a pinhole patch: element (i, j) sits at
     (x, y, z) = (j, i, d), where d = ki / (2 tan(alpha/2)) is the kernel
     focal distance and alpha = ki / W_fm * fov its angular extent;
  2. normalize each element onto the unit sphere;
  3. rotate the patch so its axis meets the ray of the anchor pixel
     (minimal rotation, no twist about the ray);
  4. project every element back to the feature map through the
     calibration rescaled to feature-map resolution.

Offsets are stored as displacements from the standard convolution
sampling positions: sampling location = (u0 + j + du, v0 + i + dv).
The x component of a kernel element is its column offset j so that the
projection of an undeformed patch reproduces the standard grid.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import Calibration
from .errors import DegenerateKernel, InvalidAnchor
from .projection import _poly_d_inverse_core, project, ray_from_angles

# antipodal guard: 1 + cos(theta) below this means the minimal-rotation
# axis is numerically undefined
_ANTIPODAL_EPS = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel dimensions and the feature-map resolution they act on.

    ``pad_w`` / ``pad_h`` are the TOTAL padding added to the input image
    width/height (not per side), consistent with the rescaling algebra
    ``s = (width + pad_w) / fm_width``.
    """

    ki: int
    kj: int
    fm_width: int
    fm_height: int
    pad_w: int = 0
    pad_h: int = 0

    def __post_init__(self):
        if self.ki < 1 or self.kj < 1 or self.ki % 2 == 0 or self.kj % 2 == 0:
            raise DegenerateKernel("kernel dims must be odd and >= 1")
        if self.fm_width < self.ki or self.fm_height < self.kj:
            raise DegenerateKernel("feature map smaller than the kernel")
        if self.pad_w < 0 or self.pad_h < 0:
            raise DegenerateKernel("padding must be >= 0")


@dataclass(frozen=True)
class KernelGrid:
    """Kernel elements lifted onto the unit sphere.

    ``points`` has shape (ki, kj, 3); the center element is exactly
    (0, 0, 1).  ``alpha`` is the kernel field of view and ``focal`` the
    pinhole distance the layout used before normalization.
    """

    points: np.ndarray
    alpha: float
    focal: float

    @property
    def ki(self) -> int:
        return self.points.shape[0]

    @property
    def kj(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ScaledCalibration:
    """Calibration parameters re-expressed at feature-map resolution."""

    cx_k: float
    cy_k: float
    fx_k: float
    fy_k: float
    s: float
    source: Calibration
    calib: Calibration


@dataclass(frozen=True)
class OffsetField:
    """Dense per-anchor kernel displacements for one feature-map size.

    ``data[v, u, i, j]`` holds (du, dv) in feature-map pixels; ``valid``
    flags anchors whose back-projection succeeded.  Invalid anchors carry
    zero offsets so downstream sampling degrades to the standard kernel.
    """

    data: np.ndarray
    valid: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def kh(self) -> int:
        return self.data.shape[2]

    @property
    def kw(self) -> int:
        return self.data.shape[3]


def kernel_fov(ki: int, fm_width: int, fov: float) -> float:
    """Angular extent assigned to a kernel: fov scaled by ki / fm_width."""
    if ki < 1 or fm_width < ki or fov <= 0:
        raise DegenerateKernel("need 1 <= ki <= fm_width and fov > 0")
    alpha = ki * fov / fm_width
    if alpha >= np.pi:
        raise DegenerateKernel(
            f"kernel field of view {alpha:.4f} rad reaches 180 degrees"
        )
    return alpha


def kernel_focal(ki: int, alpha: float) -> float:
    """Pinhole distance that spans ki elements over an angle alpha."""
    if not 0.0 < alpha < np.pi:
        raise DegenerateKernel("alpha must lie in (0, pi)")
    return ki / (2.0 * np.tan(0.5 * alpha))


def tap_offsets(ki: int, kj: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed row/column offsets (i, j) of each kernel element.

    Returns (ii, jj) of shape (ki, kj); i spans [-(ki-1)/2, (ki-1)/2]
    in unit steps, j likewise for kj.
    """
    i = np.arange(ki, dtype=np.float64) - (ki - 1) / 2.0
    j = np.arange(kj, dtype=np.float64) - (kj - 1) / 2.0
    return np.meshgrid(i, j, indexing="ij")


def build_kernel_grid(spec: KernelSpec, fov: float) -> KernelGrid:
    """Lay out the kernel at its focal distance and lift it to the sphere."""
    alpha = kernel_fov(spec.ki, spec.fm_width, fov)
    focal = kernel_focal(spec.ki, alpha)
    ii, jj = tap_offsets(spec.ki, spec.kj)
    zz = np.full_like(ii, focal)
    # hypot keeps the center norm exactly equal to focal, so the center
    # element normalizes to (0, 0, 1) with no rounding
    norm = np.hypot(np.hypot(jj, ii), zz)
    points = np.stack([jj / norm, ii / norm, zz / norm], axis=-1)
    return KernelGrid(points=points, alpha=alpha, focal=focal)


def rescale_calibration(calib: Calibration, spec: KernelSpec) -> ScaledCalibration:
    """Re-express the calibration at feature-map resolution.

    The scaling factor relates the (optionally padded) input image to the
    feature map: s = (width + pad_w) / fm_width.  The principal point and
    focal lengths shrink by the same per-axis ratio.
    """
    s = (calib.width + spec.pad_w) / spec.fm_width
    rx = (spec.fm_width - spec.pad_w / s) / calib.width
    ry = (spec.fm_height - spec.pad_h / s) / calib.height
    cx_k = calib.cx * rx
    cy_k = calib.cy * ry
    fx_k = calib.fx * rx
    fy_k = calib.fy * ry
    derived = Calibration(
        width=spec.fm_width,
        height=spec.fm_height,
        cx=cx_k,
        cy=cy_k,
        fx=fx_k,
        fy=fy_k,
        k=calib.k,
        fov=calib.fov,
        exponents=calib.exponents,
    )
    return ScaledCalibration(
        cx_k=cx_k, cy_k=cy_k, fx_k=fx_k, fy_k=fy_k,
        s=s, source=calib, calib=derived,
    )


def anchor_rotation(ray) -> np.ndarray:
    """Minimal rotation taking the optical axis (0, 0, 1) onto ``ray``.

    No twist about the target ray; identity when the ray is the axis.
    For rays within ~1e-9 rad of the antipode the axis is undefined and
    the rotation falls back to a half turn about the x axis.
    """
    ray = np.asarray(ray, dtype=np.float64)
    return _anchor_rotations(ray[None, :])[0]


def _anchor_rotations(rays: np.ndarray) -> np.ndarray:
    """Vectorized minimal rotations, shape (N, 3) -> (N, 3, 3)."""
    rx, ry, rz = rays[:, 0], rays[:, 1], rays[:, 2]
    denom = 1.0 + rz
    safe = denom > _ANTIPODAL_EPS
    denom = np.where(safe, denom, 1.0)

    out = np.empty((rays.shape[0], 3, 3), dtype=np.float64)
    out[:, 0, 0] = 1.0 - rx * rx / denom
    out[:, 0, 1] = -rx * ry / denom
    out[:, 0, 2] = rx
    out[:, 1, 0] = out[:, 0, 1]
    out[:, 1, 1] = 1.0 - ry * ry / denom
    out[:, 1, 2] = ry
    out[:, 2, 0] = -rx
    out[:, 2, 1] = -ry
    out[:, 2, 2] = 1.0 - (rx * rx + ry * ry) / denom

    if not np.all(safe):
        out[~safe] = np.diag([1.0, -1.0, -1.0])
    return out


def _rotate_grid(rot: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply per-anchor rotations (N, 3, 3) to grid points (ki, kj, 3).

    Explicit component sums keep the add order fixed, so results are
    bit-identical no matter how anchors are batched.
    """
    qx, qy, qz = points[..., 0], points[..., 1], points[..., 2]
    comps = []
    for a in range(3):
        row = rot[:, a, :]
        comps.append(
            row[:, 0, None, None] * qx[None]
            + row[:, 1, None, None] * qy[None]
            + row[:, 2, None, None] * qz[None]
        )
    return np.stack(comps, axis=-1)


def _offsets_for_anchors(
    anchors: np.ndarray, grid: KernelGrid, scaled: ScaledCalibration
) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (N, ki, kj, 2) and validity (N,) for anchor pixels (N, 2)."""
    calib = scaled.calib
    u0 = anchors[:, 0].astype(np.float64)
    v0 = anchors[:, 1].astype(np.float64)
    mx = (u0 - calib.cx) / calib.fx
    my = (v0 - calib.cy) / calib.fy
    r = np.hypot(mx, my)

    in_range = r <= calib.r_limit
    theta = np.zeros_like(r)
    converged = np.zeros_like(in_range)
    if np.any(in_range):
        th, conv = _poly_d_inverse_core(
            r[in_range], calib.k, calib.theta_max, calib.exponents,
            tol=1e-10, max_iter=100,
        )
        theta[in_range] = th
        converged[in_range] = conv
    valid = in_range & converged

    phi = np.arctan2(my, mx)
    rays = ray_from_angles(theta, phi)
    rot = _anchor_rotations(rays)
    moved = _rotate_grid(rot, grid.points)
    proj = project(moved, calib)

    # displacements are measured against the kernel's own reprojected
    # center (== the anchor up to the inversion tolerance): the center tap
    # is exactly (0, 0) and the common inversion residual cancels from
    # every tap
    ci, cj = (grid.ki - 1) // 2, (grid.kj - 1) // 2
    center = proj[:, ci, cj, :]
    ii, jj = tap_offsets(grid.ki, grid.kj)
    offsets = np.empty_like(proj)
    offsets[..., 0] = proj[..., 0] - (center[:, None, None, 0] + jj[None])
    offsets[..., 1] = proj[..., 1] - (center[:, None, None, 1] + ii[None])
    offsets[~valid] = 0.0
    return offsets, valid


def kernel_offsets_at(anchor, grid: KernelGrid, scaled: ScaledCalibration) -> np.ndarray:
    """Per-element (du, dv) for a kernel anchored at one feature-map pixel.

    The center element is exactly (0, 0): the anchor's own ray projects
    back onto the anchor, and displacements are taken relative to that
    reprojected center.

    Raises:
        InvalidAnchor: the anchor back-projects outside the representable
            radius or the inversion fails.
    """
    anchors = np.asarray(anchor, dtype=np.float64).reshape(1, 2)
    offsets, valid = _offsets_for_anchors(anchors, grid, scaled)
    if not valid[0]:
        raise InvalidAnchor(
            f"anchor ({anchors[0, 0]:g}, {anchors[0, 1]:g}) cannot be "
            f"back-projected through the scaled calibration"
        )
    return offsets[0]


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else KBCONV_THREADS, else 1.

    A value of 0 means all available cores.
    """
    if workers is None:
        env = os.environ.get("KBCONV_THREADS", "").strip()
        workers = int(env) if env else 1
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers < 0:
        raise ValueError("workers must be >= 0")
    return workers


def offset_field(
    calib: Calibration, spec: KernelSpec, workers: int | None = None
) -> OffsetField:
    """Dense offset field over every feature-map anchor.

    Anchors whose back-projection fails (outside the representable radius)
    are flagged invalid and carry zero offsets.  The computation is pure
    and per-anchor, so the output is identical for any worker count;
    rows are split across threads.
    """
    scaled = rescale_calibration(calib, spec)
    grid = build_kernel_grid(spec, calib.fov)
    h, w = spec.fm_height, spec.fm_width

    data = np.zeros((h, w, spec.ki, spec.kj, 2), dtype=np.float64)
    valid = np.zeros((h, w), dtype=bool)
    uu = np.arange(w, dtype=np.float64)

    def fill(row_lo: int, row_hi: int) -> None:
        rows = row_hi - row_lo
        vv = np.arange(row_lo, row_hi, dtype=np.float64)
        anchors = np.stack(
            [np.tile(uu, rows), np.repeat(vv, w)], axis=-1
        )
        block, block_valid = _offsets_for_anchors(anchors, grid, scaled)
        data[row_lo:row_hi] = block.reshape(rows, w, spec.ki, spec.kj, 2)
        valid[row_lo:row_hi] = block_valid.reshape(rows, w)

    n_workers = resolve_workers(workers)
    if n_workers <= 1:
        fill(0, h)
    else:
        bounds = np.linspace(0, h, n_workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                pool.submit(fill, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            for fut in futures:
                fut.result()
    return OffsetField(data=data, valid=valid)
