"""Fisheye camera calibration: validated container and JSON round-trip.

The JSON schema is a flat object with keys ``width``, ``height``, ``cx``,
``cy``, ``fx``, ``fy``, ``k`` (array of 4 coefficients), ``fov_deg``
(full diagonal field of view in degrees) and an optional ``exponents``
array (default [1, 3, 5, 9]).  Unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCalibration
from .projection import DEFAULT_EXPONENTS, poly_d, poly_d_prime

# samples of d'(theta) on [0, fov/2] used by the monotonicity check
MONOTONICITY_SAMPLES = 10_000

_JSON_KEYS = {"width", "height", "cx", "cy", "fx", "fy", "k", "fov_deg", "exponents"}


@dataclass(frozen=True)
class Calibration:
    """Intrinsics and radial distortion of a fisheye camera.

    ``fov`` is the full cone angle in radians: the maximum usable polar
    angle is ``fov / 2``, which may exceed pi/2 for lenses wider than
    180 degrees.  Instances are validated on construction and immutable
    afterwards; all operations on them are pure.
    """

    width: int
    height: int
    cx: float
    cy: float
    fx: float
    fy: float
    k: tuple[float, float, float, float]
    fov: float
    exponents: tuple[int, int, int, int] = DEFAULT_EXPONENTS

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))
        _check_invariants(self)

    @property
    def theta_max(self) -> float:
        """Search bound for polynomial inversion: fov/2 plus a 10% margin."""
        return 0.5 * self.fov * 1.1

    @property
    def r_limit(self) -> float:
        """Largest invertible radial distance, d(theta_max)."""
        return poly_d(self.theta_max, self.k, self.exponents)

    @property
    def fov_radius(self) -> float:
        """Radial distance of the field-of-view boundary, d(fov/2)."""
        return poly_d(0.5 * self.fov, self.k, self.exponents)


def _check_invariants(calib: Calibration) -> None:
    if calib.width <= 0 or calib.height <= 0:
        raise InvalidCalibration("width and height must be positive")
    if calib.fx <= 0 or calib.fy <= 0:
        raise InvalidCalibration("fx and fy must be positive")
    if not 0.0 < calib.fov <= 2.0 * math.pi:
        raise InvalidCalibration("fov must lie in (0, 2*pi] radians")
    if len(calib.k) != 4:
        raise InvalidCalibration("k must have exactly 4 coefficients")
    if len(calib.exponents) != 4 or any(e < 1 for e in calib.exponents):
        raise InvalidCalibration("exponents must be 4 integers >= 1")
    theta = np.linspace(0.0, 0.5 * calib.fov, MONOTONICITY_SAMPLES)
    dprime = poly_d_prime(theta, calib.k, calib.exponents)
    if not np.all(dprime > 0.0):
        worst = float(theta[int(np.argmin(dprime))])
        raise InvalidCalibration(
            f"d(theta) is not strictly increasing on [0, fov/2]: "
            f"d'({worst:.4f}) = {float(np.min(dprime)):.4g}"
        )


def validate(calib: Calibration) -> Calibration:
    """Re-check every invariant and return the calibration unchanged.

    Construction already validates; this is the explicit entry point for
    values coming from untrusted sources.
    """
    _check_invariants(calib)
    return calib


def _degrees_for(fov_rad: float) -> float:
    """Degrees value whose radians conversion reproduces ``fov_rad``.

    ``degrees(radians(x))`` is not always an exact float round-trip, so
    search a few ulps around the direct conversion.
    """
    deg = math.degrees(fov_rad)
    if math.radians(deg) == fov_rad:
        return deg
    for direction in (math.inf, -math.inf):
        cand = deg
        for _ in range(4):
            cand = math.nextafter(cand, direction)
            if math.radians(cand) == fov_rad:
                return cand
    return deg


def to_dict(calib: Calibration) -> dict:
    """Calibration as a JSON-serializable dict (fov in degrees)."""
    return {
        "width": calib.width,
        "height": calib.height,
        "cx": calib.cx,
        "cy": calib.cy,
        "fx": calib.fx,
        "fy": calib.fy,
        "k": list(calib.k),
        "fov_deg": _degrees_for(calib.fov),
        "exponents": list(calib.exponents),
    }


def from_dict(data: dict) -> Calibration:
    """Build and validate a Calibration from a parsed JSON object."""
    if not isinstance(data, dict):
        raise InvalidCalibration("calibration JSON must be an object")
    unknown = set(data) - _JSON_KEYS
    if unknown:
        raise InvalidCalibration(f"unknown calibration keys: {sorted(unknown)}")
    missing = (_JSON_KEYS - {"exponents"}) - set(data)
    if missing:
        raise InvalidCalibration(f"missing calibration keys: {sorted(missing)}")
    return Calibration(
        width=int(data["width"]),
        height=int(data["height"]),
        cx=float(data["cx"]),
        cy=float(data["cy"]),
        fx=float(data["fx"]),
        fy=float(data["fy"]),
        k=tuple(float(v) for v in data["k"]),
        fov=math.radians(float(data["fov_deg"])),
        exponents=tuple(int(e) for e in data.get("exponents", DEFAULT_EXPONENTS)),
    )


def load(path) -> Calibration:
    """Load and validate a calibration JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidCalibration(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(data)


def save(calib: Calibration, path) -> None:
    """Write a calibration JSON file (UTF-8, stable key order)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(calib), fh, indent=2, sort_keys=True)
        fh.write("\n")
