"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in
captured output).  Tolerances are pinned here, not configurable.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from kbconv import calibration
from kbconv.calibration import Calibration
from kbconv.conv import ConvParams, conv2d, deform_conv2d
from kbconv.errors import FovExceeded
from kbconv.formats import read_kbof, read_kbtn, write_kbof, write_kbtn
from kbconv.grid import Grid
from kbconv.kernel import (
    KernelSpec,
    OffsetField,
    build_kernel_grid,
    kernel_offsets_at,
    offset_field,
    rescale_calibration,
    tap_offsets,
)
from kbconv.metrics import depth_metrics, radial_bins, radial_profile, seg_metrics
from kbconv.projection import backproject, poly_d, poly_d_inverse, project
from kbconv.warp import (
    PerspectiveIntrinsics,
    equirect_to_fisheye,
    fisheye_to_perspective,
)
from test_conv import naive_conv2d
from test_warp import checker_pano, scalar_pano_lookup


@contextmanager
def criterion(n, desc):
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {n}: FAIL - {desc}")
        raise
    print(f"ACCEPTANCE {n}: PASS - {desc}")


def in_fov_pixels(rng, calib, n):
    radius = calib.fov_radius * np.sqrt(rng.uniform(0.0, 0.99**2, n))
    az = rng.uniform(-math.pi, math.pi, n)
    return np.stack(
        [calib.cx + calib.fx * radius * np.cos(az),
         calib.cy + calib.fy * radius * np.sin(az)],
        axis=-1,
    )


def test_01_projection_round_trip(rng, calib_f165, calib_f195):
    with criterion(1, "projection round-trip <= 1e-6 px on F165/F195, < 1 s"):
        start = time.perf_counter()
        for calib in (calib_f165, calib_f195):
            pix = in_fov_pixels(rng, calib, 10_000)
            back = project(backproject(pix, calib), calib)
            err = np.linalg.norm(back - pix, axis=-1)
            assert np.max(err) <= 1e-6
        assert time.perf_counter() - start < 1.0


def test_02_polynomial_inversion(calib_f165, calib_f195):
    with criterion(2, "|d^-1(d(theta)) - theta| <= 1e-8 incl. theta > pi/2"):
        for calib in (calib_f165, calib_f195):
            theta = np.linspace(0.0, 0.5 * calib.fov, 10_000)
            r = poly_d(theta, calib.k, calib.exponents)
            back = poly_d_inverse(r, calib.k, calib.theta_max, calib.exponents)
            assert np.max(np.abs(back - theta)) <= 1e-8
        assert 0.5 * calib_f195.fov > math.pi / 2  # the >180 regime ran


def test_03_center_tap_nullity(calib_f165, calib_f195):
    with criterion(3, "3x3 offset field on 64x64: center taps <= 1e-9 px"):
        for calib in (calib_f165, calib_f195):
            field = offset_field(calib, KernelSpec(3, 3, 64, 64))
            assert np.any(field.valid)
            center = field.data[field.valid][:, 1, 1, :]
            assert np.max(np.abs(center)) <= 1e-9


def _antisymmetry_error(calib):
    spec = KernelSpec(3, 3, calib.width, calib.height)
    scaled = rescale_calibration(calib, spec)
    grid = build_kernel_grid(spec, calib.fov)
    off = kernel_offsets_at((calib.cx, calib.cy), grid, scaled)
    return float(np.max(np.abs(off + off[::-1, ::-1])))


def _equivariance_error(calib):
    spec = KernelSpec(3, 3, calib.width, calib.height)
    scaled = rescale_calibration(calib, spec)
    grid = build_kernel_grid(spec, calib.fov)
    ii, jj = tap_offsets(3, 3)
    c = np.array([calib.cx, calib.cy])
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    worst = 0.0
    for anchor in [(calib.cx + 9.0, calib.cy), (calib.cx + 5.0, calib.cy - 7.0)]:
        anchor = np.asarray(anchor)
        turned = c + rot @ (anchor - c)

        def footprint(a):
            off = kernel_offsets_at(a, grid, scaled)
            pos = np.empty_like(off)
            pos[..., 0] = a[0] + jj + off[..., 0]
            pos[..., 1] = a[1] + ii + off[..., 1]
            return pos

        ref = footprint(anchor)
        got = footprint(turned)
        for i in range(3):
            for j in range(3):
                want = c + rot @ (ref[2 - j, i] - c)
                worst = max(worst, float(np.max(np.abs(got[i, j] - want))))
    return worst


def test_04_antisymmetry_and_equivariance():
    with criterion(4, "offset antisymmetry <= 1e-9, equivariance <= 1e-6"):
        equidistant = Calibration(64, 64, 31.5, 31.5, 16.0, 16.0,
                                  (1, 0, 0, 0), math.radians(195.0))
        f195_like = Calibration(64, 64, 31.5, 31.5, 13.0, 13.0,
                                (1.0, 0.03, 0.001, 0.0002),
                                math.radians(195.0))
        for calib in (equidistant, f195_like):
            assert _antisymmetry_error(calib) <= 1e-9
            assert _equivariance_error(calib) <= 1e-6


def test_05_convolution_equivalences(rng):
    with criterion(5, "deform==conv at zero offsets (100x), conv==naive "
                      "bit-exact (20x), < 30 s"):
        start = time.perf_counter()
        for _ in range(100):
            c = int(rng.integers(1, 5))
            o = int(rng.integers(1, 4))
            h = int(rng.integers(8, 33))
            w = int(rng.integers(8, 33))
            x = rng.normal(size=(c, h, w))
            wts = rng.normal(size=(o, c, 3, 3))
            field = OffsetField(
                data=np.zeros((h - 2, w - 2, 3, 3, 2)),
                valid=np.ones((h - 2, w - 2), dtype=bool),
            )
            plain = conv2d(Grid(x), wts).data
            deformed = deform_conv2d(Grid(x), wts, field).data
            scale = np.max(np.abs(plain)) + 1.0
            assert np.max(np.abs(deformed - plain)) <= 1e-6 * scale

        for _ in range(20):
            c = int(rng.integers(1, 4))
            o = int(rng.integers(1, 3))
            h = int(rng.integers(5, 13))
            w = int(rng.integers(5, 13))
            stride = int(rng.integers(1, 3))
            x = rng.normal(size=(c, h, w))
            wts = rng.normal(size=(o, c, 3, 3))
            bias = rng.normal(size=o)
            got = conv2d(Grid(x), wts, ConvParams(stride=stride, bias=bias))
            want = naive_conv2d(x, wts, stride, bias)
            np.testing.assert_array_equal(got.data, want)
        assert time.perf_counter() - start < 30.0


def test_06_rescaling_identities():
    with criterion(6, "calibration rescaling identities to 1e-12 relative"):
        base = Calibration(1024, 768, 500.0, 380.0, 300.0, 310.0,
                           (1, 0, 0, 0), math.radians(165.0))
        same = rescale_calibration(base, KernelSpec(3, 3, 1024, 768))
        assert same.s == pytest.approx(1.0, rel=1e-12)
        for got, want in [(same.cx_k, base.cx), (same.cy_k, base.cy),
                          (same.fx_k, base.fx), (same.fy_k, base.fy)]:
            assert got == pytest.approx(want, rel=1e-12)

        pure = Calibration(1024, 1024, 500.0, 480.0, 300.0, 310.0,
                           (1, 0, 0, 0), math.radians(165.0))
        quarter = rescale_calibration(pure, KernelSpec(3, 3, 256, 256))
        assert quarter.s == pytest.approx(4.0, rel=1e-12)
        assert quarter.cx_k == pytest.approx(pure.cx / 4.0, rel=1e-12)
        assert quarter.fy_k == pytest.approx(pure.fy / 4.0, rel=1e-12)

        padded_src = Calibration(1000, 1000, 470.0, 500.0, 320.0, 330.0,
                                 (1, 0, 0, 0), math.radians(165.0))
        padded = rescale_calibration(
            padded_src, KernelSpec(3, 3, 256, 256, pad_w=24, pad_h=24)
        )
        assert padded.s == pytest.approx(4.0, rel=1e-12)
        assert padded.cx_k == pytest.approx(0.25 * padded_src.cx, rel=1e-12)
        assert padded.fx_k == pytest.approx(0.25 * padded_src.fx, rel=1e-12)


def test_07_warp_consistency(calib_f165, calib_f195):
    with criterion(7, "pano->fisheye->persp vs direct <= 2/255 MAD; "
                      ">=90 deg rectification fails"):
        pano = checker_pano(128, cells=16)
        fish = equirect_to_fisheye(pano, calib_f165)
        persp = PerspectiveIntrinsics.from_hfov(96, 96, 60.0)
        via = fisheye_to_perspective(fish, calib_f165, persp)

        direct = np.empty((96, 96))
        for v in range(96):
            for u in range(96):
                ray = np.array([(u - persp.cx) / persp.fx,
                                (v - persp.cy) / persp.fy, 1.0])
                direct[v, u] = scalar_pano_lookup(pano.data[0],
                                                  ray / np.linalg.norm(ray))
        mad = np.mean(np.abs(via.data[0] - direct)) / 255.0
        assert mad <= 2.0 / 255.0

        with pytest.raises(FovExceeded):
            # a 184-degree target from the F195 source needs rays at 92
            # degrees incidence: no pinhole image exists
            fisheye_to_perspective(
                fish, calib_f195, PerspectiveIntrinsics.from_hfov(64, 64, 184.0)
            )


def test_08_metric_unit_values(rng, calib_f165):
    with criterion(8, "hand-computed depth/seg values exact to 1e-12; "
                      "delta monotone; radial mass conserved"):
        r = depth_metrics(np.array([[1.0, 2.0]]), np.array([[2.0, 2.0]]),
                          np.ones((1, 2), dtype=bool))
        assert r.mae == pytest.approx(0.5, abs=1e-12)
        assert r.rmse == pytest.approx(math.sqrt(0.5), abs=1e-12)
        assert r.delta1 == pytest.approx(0.5, abs=1e-12)

        s = seg_metrics(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]),
                        n_classes=2)
        assert s.miou == pytest.approx(7 / 12, abs=1e-12)
        assert s.macc == pytest.approx(3 / 4, abs=1e-12)

        for _ in range(10):
            gt = rng.uniform(0.3, 9.0, size=(24, 24))
            pred = gt * rng.uniform(0.4, 2.5, size=(24, 24))
            rep = depth_metrics(pred, gt, np.ones((24, 24), dtype=bool))
            assert rep.delta1 <= rep.delta2 <= rep.delta3

        binning = radial_bins(calib_f165, (512, 512), 9)
        profile = radial_profile(rng.normal(size=(512, 512)), binning)
        assert profile.count.sum() == np.sum(binning.indices >= 0)


def test_09_offset_field_performance(tmp_path, calib_f195):
    with criterion(9, "256x256 offset field: < 2 s single, < 0.5 s with 8 "
                      "workers, byte-identical files"):
        spec = KernelSpec(3, 3, 256, 256)

        start = time.perf_counter()
        single = offset_field(calib_f195, spec, workers=1)
        t_single = time.perf_counter() - start
        assert t_single < 2.0

        start = time.perf_counter()
        eight = offset_field(calib_f195, spec, workers=8)
        t_eight = time.perf_counter() - start
        assert t_eight < 0.5

        p1, p8 = tmp_path / "w1.kbof", tmp_path / "w8.kbof"
        write_kbof(single, p1)
        write_kbof(eight, p8)
        assert p1.read_bytes() == p8.read_bytes()


def test_10_format_round_trips(tmp_path, rng, calib_f165, calib_f195):
    with criterion(10, "KBOF/KBTN write-read-write byte-identical; "
                       "calibration JSON exact"):
        field = offset_field(calib_f195, KernelSpec(3, 3, 32, 32))
        k1, k2 = tmp_path / "f1.kbof", tmp_path / "f2.kbof"
        write_kbof(field, k1)
        write_kbof(read_kbof(k1), k2)
        assert k1.read_bytes() == k2.read_bytes()

        t1, t2 = tmp_path / "t1.kbtn", tmp_path / "t2.kbtn"
        write_kbtn(rng.normal(size=(2, 3, 4, 5)), t1)
        write_kbtn(read_kbtn(t1), t2)
        assert t1.read_bytes() == t2.read_bytes()

        for calib in (calib_f165, calib_f195):
            path = tmp_path / "c.json"
            calibration.save(calib, path)
            assert calibration.load(path) == calib
            again = tmp_path / "c2.json"
            calibration.save(calibration.load(path), again)
            assert path.read_bytes() == again.read_bytes()
            data = json.loads(path.read_text())
            assert set(data) == {"width", "height", "cx", "cy", "fx", "fy",
                                 "k", "fov_deg", "exponents"}
