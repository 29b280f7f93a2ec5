"""Forward/backward projection model tests."""

import math

import numpy as np
import pytest

from kbconv.calibration import Calibration
from kbconv.errors import InvalidCalibration, OutOfRange
from kbconv.projection import (
    angles_from_ray,
    backproject,
    poly_d,
    poly_d_inverse,
    poly_d_prime,
    project,
    ray_from_angles,
)


def bisect_inverse(r, k, theta_max, exponents=(1, 3, 5, 9), tol=1e-12):
    """Independent oracle: plain bisection on the monotone polynomial."""
    lo, hi = 0.0, theta_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poly_d(mid, k, exponents) - r > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


class TestPolyD:
    def test_identity_coefficients(self):
        assert poly_d(0.5, (1, 0, 0, 0)) == 0.5

    def test_zero_angle(self):
        assert poly_d(0.0, (1.0, 0.2, -0.3, 0.4)) == 0.0

    def test_cubic_term(self):
        assert poly_d(1.0, (1.0, 0.1, 0.0, 0.0)) == pytest.approx(1.1, abs=1e-15)

    def test_default_exponents_are_1_3_5_9(self):
        theta = 0.7
        k = (0.9, 0.05, -0.01, 0.002)
        expected = (
            0.9 * theta + 0.05 * theta**3 - 0.01 * theta**5 + 0.002 * theta**9
        )
        assert poly_d(theta, k) == pytest.approx(expected, rel=1e-15)

    def test_configurable_exponents(self):
        theta = 0.7
        k = (1.0, 0.05, 0.01, 0.001)
        expected = theta + 0.05 * theta**3 + 0.01 * theta**5 + 0.001 * theta**7
        assert poly_d(theta, k, (1, 3, 5, 7)) == pytest.approx(expected, rel=1e-15)

    def test_odd_symmetry_of_polynomial_form(self):
        # only theta >= 0 is accepted by the model, but the polynomial
        # itself must be odd for the radial model to make sense
        k = (1.0, 0.03, 0.001, 0.0002)
        theta = np.linspace(0.1, 1.5, 7)
        np.testing.assert_allclose(poly_d(-theta, k), -poly_d(theta, k), rtol=1e-15)

    def test_derivative_matches_finite_differences(self):
        k = (1.0, 0.03, 0.001, 0.0002)
        theta = np.linspace(0.05, 1.6, 9)
        h = 1e-6
        fd = (poly_d(theta + h, k) - poly_d(theta - h, k)) / (2 * h)
        np.testing.assert_allclose(poly_d_prime(theta, k), fd, rtol=1e-8)


class TestPolyDInverse:
    def test_zero_radius(self):
        assert poly_d_inverse(0.0, (1.0, 0.05, 0.0, 0.001), theta_max=1.9) == 0.0

    def test_identity_polynomial(self):
        theta = poly_d_inverse(0.7, (1, 0, 0, 0), theta_max=1.9)
        assert theta == pytest.approx(0.7, abs=1e-10)

    def test_round_trip_against_bisection_oracle(self):
        k = (1.0, 0.05, 0.0, 0.001)
        r = poly_d(1.2, k)
        theta = poly_d_inverse(r, k, theta_max=1.9)
        assert theta == pytest.approx(1.2, abs=1e-8)
        assert theta == pytest.approx(bisect_inverse(r, k, 1.9), abs=1e-8)

    def test_vectorized_round_trip(self, calib_f195):
        theta = np.linspace(0.0, 0.5 * calib_f195.fov, 513)
        r = poly_d(theta, calib_f195.k)
        back = poly_d_inverse(r, calib_f195.k, calib_f195.theta_max)
        np.testing.assert_allclose(back, theta, atol=1e-8)

    def test_out_of_range(self, calib_f195):
        with pytest.raises(OutOfRange):
            poly_d_inverse(
                calib_f195.r_limit * 1.01, calib_f195.k, calib_f195.theta_max
            )

    def test_matches_oracle_on_random_radii(self, rng, calib_f165):
        k = calib_f165.k
        tmax = calib_f165.theta_max
        r = rng.uniform(0.0, poly_d(tmax, k) * 0.999, size=64)
        got = poly_d_inverse(r, k, tmax)
        want = np.array([bisect_inverse(v, k, tmax) for v in r])
        np.testing.assert_allclose(got, want, atol=1e-8)


class TestProject:
    def test_optical_axis_hits_principal_point(self, calib_f195):
        uv = project(np.array([0.0, 0.0, 1.0]), calib_f195)
        np.testing.assert_allclose(uv, [calib_f195.cx, calib_f195.cy], atol=0)

    def test_equidistant_scalar_case(self):
        # d(theta) = theta, fx = fy = 100, theta = pi/4 along +x
        calib = Calibration(640, 480, 320.0, 240.0, 100.0, 100.0,
                            (1, 0, 0, 0), math.radians(195.0))
        uv = project(ray_from_angles(math.pi / 4, 0.0), calib)
        np.testing.assert_allclose(uv, [320.0 + 100.0 * math.pi / 4, 240.0],
                                   atol=1e-12)

    def test_vertical_azimuth_keeps_u_at_cx(self, calib_f165):
        for theta in (0.2, 0.8, 1.3):
            uv = project(ray_from_angles(theta, math.pi / 2), calib_f165)
            assert uv[0] == pytest.approx(calib_f165.cx, abs=1e-9)
            d = poly_d(theta, calib_f165.k)
            assert uv[1] == pytest.approx(calib_f165.cy + calib_f165.fy * d,
                                          rel=1e-12)

    def test_azimuthal_equivariance_at_quarter_turns(self, rng, calib_f165):
        # fx = fy: rotating a ray by 90/180/270 degrees about the optical
        # axis rotates its projection about the principal point
        c = np.array([calib_f165.cx, calib_f165.cy])
        rays = ray_from_angles(rng.uniform(0.05, 1.4, 32),
                               rng.uniform(-math.pi, math.pi, 32))
        base = project(rays, calib_f165) - c
        rot_px = np.array([[0.0, -1.0], [1.0, 0.0]])
        rotated = rays.copy()
        for _ in range(3):
            # exact 90-degree turn about z: (x, y, z) -> (-y, x, z)
            rotated = np.stack(
                [-rotated[..., 1], rotated[..., 0], rotated[..., 2]], axis=-1
            )
            base = base @ rot_px.T
            np.testing.assert_allclose(
                project(rotated, calib_f165) - c, base, atol=1e-9
            )

    def test_beyond_90_degrees_is_legal(self, calib_f195):
        theta = math.radians(95.0)
        uv = project(ray_from_angles(theta, 0.0), calib_f195)
        expected_u = calib_f195.cx + calib_f195.fx * poly_d(theta, calib_f195.k)
        assert uv[0] == pytest.approx(expected_u, rel=1e-12)


class TestBackproject:
    def test_principal_point_convention(self, calib_f195):
        ray = backproject(np.array([calib_f195.cx, calib_f195.cy]), calib_f195)
        np.testing.assert_allclose(ray, [0.0, 0.0, 1.0], atol=0)
        theta, phi = angles_from_ray(ray)
        assert theta == 0.0
        assert phi == 0.0

    def test_pixel_right_of_center_has_zero_azimuth(self, calib_f165):
        ray = backproject(np.array([calib_f165.cx + 50.0, calib_f165.cy]),
                          calib_f165)
        _, phi = angles_from_ray(ray)
        assert phi == pytest.approx(0.0, abs=1e-15)

    def test_unit_norm(self, rng, calib_f195):
        pix = _random_in_fov_pixels(rng, calib_f195, 200)
        rays = backproject(pix, calib_f195)
        np.testing.assert_allclose(np.linalg.norm(rays, axis=-1), 1.0, atol=1e-12)

    def test_round_trip_forward_oracle(self, rng, calib_f165, calib_f195):
        for calib in (calib_f165, calib_f195):
            pix = _random_in_fov_pixels(rng, calib, 500)
            again = project(backproject(pix, calib), calib)
            err = np.linalg.norm(again - pix, axis=-1)
            assert np.max(err) <= 1e-6

    def test_out_of_range_pixel(self, calib_f165):
        far = np.array([calib_f165.cx + 10_000.0, calib_f165.cy])
        with pytest.raises(OutOfRange):
            backproject(far, calib_f165)


def _random_in_fov_pixels(rng, calib, n):
    """Pixels uniformly inside 99% of the field-of-view circle."""
    radius = calib.fov_radius * np.sqrt(rng.uniform(0.0, 0.99**2, n))
    az = rng.uniform(-math.pi, math.pi, n)
    return np.stack(
        [calib.cx + calib.fx * radius * np.cos(az),
         calib.cy + calib.fy * radius * np.sin(az)],
        axis=-1,
    )


class TestValidation:
    def test_equidistant_wide_fov_accepted(self):
        Calibration(640, 480, 320, 240, 100, 100, (1, 0, 0, 0),
                    math.radians(195.0))

    def test_non_monotone_polynomial_rejected(self):
        # d'(theta) = 1 - 3 theta^2 turns negative at theta ~ 0.577,
        # well before fov/2 ~ 1.70
        with pytest.raises(InvalidCalibration, match="increasing"):
            Calibration(640, 480, 320, 240, 100, 100, (1, -1, 0, 0),
                        math.radians(195.0))

    def test_zero_focal_rejected(self):
        with pytest.raises(InvalidCalibration, match="positive"):
            Calibration(640, 480, 320, 240, 0.0, 100, (1, 0, 0, 0),
                        math.radians(195.0))

    def test_fov_bounds(self):
        with pytest.raises(InvalidCalibration):
            Calibration(640, 480, 320, 240, 100, 100, (1, 0, 0, 0), 0.0)
        with pytest.raises(InvalidCalibration):
            Calibration(640, 480, 320, 240, 100, 100, (1, 0, 0, 0),
                        2 * math.pi + 0.1)
