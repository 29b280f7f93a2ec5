"""Radially symmetric fisheye projection (Kannala-Brandt model).

Forward model, for a unit ray with polar angle theta (from the optical
axis) and azimuth phi:

    u = d(theta) * fx * cos(phi) + cx
    v = d(theta) * fy * sin(phi) + cy

where the radial distortion polynomial is odd in theta:

    d(theta) = k1*theta^e1 + k2*theta^e2 + k3*theta^e3 + k4*theta^e4

with exponents (e1..e4) = (1, 3, 5, 9) by default.  Back-projection
normalizes the pixel with the focal lengths and inverts d iteratively:

    mx = (u - cx) / fx,  my = (v - cy) / fy
    phi = atan2(my, mx),  theta = d^-1(sqrt(mx^2 + my^2))

theta may exceed pi/2: the model covers fields of view beyond 180 degrees.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence, OutOfRange

DEFAULT_EXPONENTS = (1, 3, 5, 9)


def poly_d(theta, k, exponents=DEFAULT_EXPONENTS):
    """Evaluate the radial distortion polynomial d(theta).

    Args:
        theta: polar angle(s) in radians, >= 0. Scalar or array.
        k: the four polynomial coefficients (k1..k4).
        exponents: the four odd exponents, default (1, 3, 5, 9).

    Returns:
        d(theta), same shape as ``theta``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    out = np.zeros_like(theta)
    for kn, en in zip(k, exponents):
        out = out + kn * theta**en
    if out.ndim == 0:
        return float(out)
    return out


def poly_d_prime(theta, k, exponents=DEFAULT_EXPONENTS):
    """Evaluate the derivative d'(theta) of the distortion polynomial."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.zeros_like(theta)
    for kn, en in zip(k, exponents):
        out = out + en * kn * theta ** (en - 1)
    if out.ndim == 0:
        return float(out)
    return out


def poly_d_inverse(
    r,
    k,
    theta_max,
    exponents=DEFAULT_EXPONENTS,
    tol: float = 1e-10,
    max_iter: int = 100,
):
    """Invert the distortion polynomial: find theta with d(theta) = r.

    Newton's method seeded at ``r / k1`` (the equidistant guess), with a
    bisection fallback on [0, theta_max] whenever a Newton step leaves the
    bracket or the derivative is non-positive at the iterate.  ``d`` must
    be strictly increasing on [0, theta_max].

    Args:
        r: radial distance(s), >= 0. Scalar or array.
        k: polynomial coefficients.
        theta_max: upper end of the search interval, in radians.
        tol: accept theta once ``|d(theta) - r| <= tol``.
        max_iter: iteration budget before NoConvergence.

    Raises:
        OutOfRange: some ``r`` exceeds ``d(theta_max)``.
        NoConvergence: residual above ``tol`` after ``max_iter`` iterations.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    scalar = r_arr.ndim == 0
    r_flat = np.atleast_1d(r_arr).ravel()

    r_lim = poly_d(theta_max, k, exponents)
    if np.any(r_flat > r_lim):
        bad = float(np.max(r_flat))
        raise OutOfRange(
            f"radial distance {bad:.6g} exceeds d(theta_max) = {r_lim:.6g}"
        )

    theta, converged = _poly_d_inverse_core(
        r_flat, k, theta_max, exponents, tol, max_iter
    )
    if not np.all(converged):
        n_bad = int(np.sum(~converged))
        raise NoConvergence(
            f"{n_bad} of {r_flat.size} inversions above tol={tol:g} "
            f"after {max_iter} iterations"
        )
    if scalar:
        return float(theta[0])
    return theta.reshape(r_arr.shape)


def _poly_d_inverse_core(r, k, theta_max, exponents, tol, max_iter):
    """Safeguarded Newton on a flat array; returns (theta, converged mask).

    Converged entries freeze, so each element's trajectory depends only on
    its own value: results are identical under any chunking of ``r``.
    """
    lo = np.zeros_like(r)
    hi = np.full_like(r, theta_max)
    theta = np.clip(r / k[0], 0.0, theta_max)

    f = poly_d(theta, k, exponents) - r
    active = np.abs(f) > tol
    for _ in range(max_iter):
        if not np.any(active):
            break
        th = theta[active]
        fa = f[active]
        dp = poly_d_prime(th, k, exponents)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dp > 0.0, fa / dp, np.inf)
        cand = th - step
        bad = ~((cand > lo[active]) & (cand < hi[active]) & np.isfinite(cand))
        cand[bad] = 0.5 * (lo[active][bad] + hi[active][bad])

        fc = poly_d(cand, k, exponents) - r[active]
        # shrink the bracket around the sign change
        lo_a, hi_a = lo[active], hi[active]
        above = fc > 0.0
        hi_a[above] = cand[above]
        lo_a[~above] = cand[~above]
        lo[active], hi[active] = lo_a, hi_a

        theta[active] = cand
        f[active] = fc
        still = np.abs(fc) > tol
        idx = np.flatnonzero(active)
        active[idx[~still]] = False

    return theta, np.abs(f) <= tol


def ray_from_angles(theta, phi) -> np.ndarray:
    """Unit direction(s) from polar angle theta and azimuth phi.

    Components follow x = sin(theta)cos(phi), y = sin(theta)sin(phi),
    z = cos(theta); stacked on the last axis.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)),
        axis=-1,
    )


def angles_from_ray(ray) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) for unit direction(s) of shape (..., 3).

    theta in [0, pi]; phi in (-pi, pi], with phi = 0 on the optical axis.
    """
    ray = np.asarray(ray, dtype=np.float64)
    theta = np.arctan2(np.hypot(ray[..., 0], ray[..., 1]), ray[..., 2])
    phi = np.arctan2(ray[..., 1], ray[..., 0])
    return theta, phi


def project(ray, calib) -> np.ndarray:
    """Project unit ray(s) of shape (..., 3) to pixel coordinates (..., 2).

    Evaluates the forward model without any clipping to the image bounds;
    rays beyond the field of view still produce coordinates and validity
    is the caller's concern.
    """
    ray = np.asarray(ray, dtype=np.float64)
    sin_t = np.hypot(ray[..., 0], ray[..., 1])
    theta = np.arctan2(sin_t, ray[..., 2])
    d = poly_d(theta, calib.k, calib.exponents)
    # cos(phi), sin(phi) without atan2; the d(0) = 0 factor zeroes the
    # arbitrary direction chosen at the axis
    safe = np.where(sin_t > 0.0, sin_t, 1.0)
    cos_p = np.where(sin_t > 0.0, ray[..., 0] / safe, 1.0)
    sin_p = np.where(sin_t > 0.0, ray[..., 1] / safe, 0.0)
    u = d * calib.fx * cos_p + calib.cx
    v = d * calib.fy * sin_p + calib.cy
    return np.stack([u, v], axis=-1)


def backproject(pixel, calib, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Back-project pixel(s) of shape (..., 2) to unit rays (..., 3).

    At the principal point the azimuth is fixed to 0 by convention.

    Raises:
        OutOfRange: pixel radius beyond the representable range.
        NoConvergence: polynomial inversion failed.
    """
    pixel = np.asarray(pixel, dtype=np.float64)
    mx = (pixel[..., 0] - calib.cx) / calib.fx
    my = (pixel[..., 1] - calib.cy) / calib.fy
    r = np.hypot(mx, my)
    theta = poly_d_inverse(
        r, calib.k, calib.theta_max, calib.exponents, tol=tol, max_iter=max_iter
    )
    phi = np.arctan2(my, mx)
    return ray_from_angles(theta, phi)
