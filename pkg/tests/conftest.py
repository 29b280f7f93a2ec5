import math

import numpy as np
import pytest

from kbconv.calibration import Calibration


@pytest.fixture
def calib_f165() -> Calibration:
    """165-degree fisheye on a 512x512 sensor, mildly non-equidistant."""
    return Calibration(
        width=512,
        height=512,
        cx=255.5,
        cy=255.5,
        fx=180.0,
        fy=180.0,
        k=(1.0, -0.05, 0.01, -0.001),
        fov=math.radians(165.0),
    )


@pytest.fixture
def calib_f195() -> Calibration:
    """195-degree fisheye (rays beyond 90 degrees incidence are in view)."""
    return Calibration(
        width=512,
        height=512,
        cx=255.5,
        cy=255.5,
        fx=128.0,
        fy=128.0,
        k=(1.0, 0.03, 0.001, 0.0002),
        fov=math.radians(195.0),
    )


@pytest.fixture
def calib_equidistant() -> Calibration:
    """Ideal equidistant model d(theta) = theta, 195-degree cone."""
    return Calibration(
        width=512,
        height=512,
        cx=255.5,
        cy=255.5,
        fx=128.0,
        fy=128.0,
        k=(1.0, 0.0, 0.0, 0.0),
        fov=math.radians(195.0),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240831)
