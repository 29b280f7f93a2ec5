"""Depth and segmentation metrics plus radial error profiling.

Depth metrics over a boolean mask (which must exclude invalid pixels and
non-positive ground truth):

    MRE      = mean(|p - g| / g)
    MAE      = mean(|p - g|)
    RMSE     = sqrt(mean((p - g)^2))
    RMSE_log = sqrt(mean((log10 p - log10 g)^2))
    delta^n  = fraction with max(p/g, g/p) < 1.25^n   (strict)

Segmentation metrics are confusion-matrix based; classes absent from the
ground truth are excluded from the means.  Radial profiles bin a
per-pixel metric by pixel distance to the principal point and report the
per-bin mean and population standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import Calibration
from .errors import EmptyMask
from .grid import Grid
from .warp import valid_mask


@dataclass(frozen=True)
class DepthReport:
    mre: float
    mae: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n: int


@dataclass(frozen=True)
class SegReport:
    miou: float
    macc: float
    per_class_iou: np.ndarray
    n_classes: int


@dataclass(frozen=True)
class RadialBinning:
    """Per-pixel bin indices (-1 outside the mask) and the bin edges."""

    indices: np.ndarray
    edges: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1


@dataclass(frozen=True)
class RadialProfile:
    bin_edges: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray


def _as_array(values) -> np.ndarray:
    if isinstance(values, Grid):
        arr = values.data
        return arr[0] if arr.shape[0] == 1 else arr
    return np.asarray(values)


def depth_metrics(pred, gt, mask) -> DepthReport:
    """Depth errors and threshold accuracies over the masked pixels.

    Predictions are expected positive wherever the mask is set;
    non-positive predictions poison RMSE_log and count as delta failures.
    """
    p_all = _as_array(pred).astype(np.float64)
    g_all = _as_array(gt).astype(np.float64)
    m = _as_array(mask) > 0.5
    if p_all.shape != g_all.shape or p_all.shape != m.shape:
        raise EmptyMask(
            f"shape mismatch: pred {p_all.shape}, gt {g_all.shape}, "
            f"mask {m.shape}"
        )
    if not np.any(m):
        raise EmptyMask("mask selects no pixels")
    p = p_all[m]
    g = g_all[m]

    diff = np.abs(p - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(p / g, g / p)
        ratio = np.where(p > 0.0, ratio, np.inf)
        log_err = np.log10(p) - np.log10(g)
    return DepthReport(
        mre=float(np.mean(diff / g)),
        mae=float(np.mean(diff)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean(log_err**2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        n=int(p.size),
    )


def seg_metrics(pred, gt, n_classes: int, ignore: int | None = None) -> SegReport:
    """Mean IoU and mean accuracy over the classes present in ``gt``.

    Pixels whose ground truth equals ``ignore`` are dropped; a prediction
    of ``ignore`` on a kept pixel counts as a miss for its true class.
    """
    p = _as_array(pred).astype(np.int64).ravel()
    g = _as_array(gt).astype(np.int64).ravel()
    if p.shape != g.shape:
        raise EmptyMask("pred and gt shapes differ")
    if ignore is not None:
        keep = g != ignore
        p, g = p[keep], g[keep]
    if g.size == 0:
        raise EmptyMask("no pixels left after removing the ignore label")
    if np.any((g < 0) | (g >= n_classes)):
        raise EmptyMask("gt labels outside [0, n_classes)")

    # predictions of the ignore label (or anything out of range) land in
    # a sink column: they add to FN of the true class, never to a FP
    p_col = np.where((p >= 0) & (p < n_classes), p, n_classes)
    confusion = np.bincount(
        g * (n_classes + 1) + p_col, minlength=n_classes * (n_classes + 1)
    ).reshape(n_classes, n_classes + 1)

    tp = np.diagonal(confusion[:, :n_classes]).astype(np.float64)
    fn = confusion.sum(axis=1) - tp
    fp = confusion[:, :n_classes].sum(axis=0) - tp

    present = confusion.sum(axis=1) > 0
    iou = np.full(n_classes, np.nan)
    acc = np.full(n_classes, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        iou[present] = tp[present] / (tp + fp + fn)[present]
        acc[present] = tp[present] / (tp + fn)[present]
    return SegReport(
        miou=float(np.mean(iou[present])),
        macc=float(np.mean(acc[present])),
        per_class_iou=iou,
        n_classes=n_classes,
    )


def radial_bins(calib: Calibration, shape, n_bins: int) -> RadialBinning:
    """Uniform radial bins over the in-mask pixel distances.

    ``shape`` is (height, width) and should match the calibration
    resolution.  The final bin is closed on the right, so the most
    distant in-mask pixel falls in bin ``n_bins - 1``; pixels outside the
    field-of-view mask get index -1.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    h, w = shape
    uu = np.arange(w, dtype=np.float64)[None, :]
    vv = np.arange(h, dtype=np.float64)[:, None]
    dist = np.hypot(uu - calib.cx, vv - calib.cy)

    if (h, w) == (calib.height, calib.width):
        mask = valid_mask(calib).data[0] > 0.5
    else:
        mask = np.ones((h, w), dtype=bool)
    if not np.any(mask):
        raise EmptyMask("field-of-view mask is empty")

    r_max = float(dist[mask].max())
    if r_max == 0.0:
        r_max = 1.0
    idx = np.minimum((dist / r_max * n_bins).astype(np.int64), n_bins - 1)
    idx[~mask] = -1
    edges = np.linspace(0.0, r_max, n_bins + 1)
    return RadialBinning(indices=idx, edges=edges)


def radial_profile(per_pixel_metric, binning: RadialBinning) -> RadialProfile:
    """Per-bin mean and population standard deviation of a metric."""
    metric = _as_array(per_pixel_metric).astype(np.float64)
    idx = binning.indices
    if metric.shape != idx.shape:
        raise EmptyMask("metric and binning shapes differ")
    n_bins = binning.n_bins

    sel = idx >= 0
    flat_idx = idx[sel]
    values = metric[sel]
    count = np.bincount(flat_idx, minlength=n_bins)
    sums = np.bincount(flat_idx, weights=values, minlength=n_bins)
    sumsq = np.bincount(flat_idx, weights=values**2, minlength=n_bins)

    mean = np.full(n_bins, np.nan)
    std = np.full(n_bins, np.nan)
    nonempty = count > 0
    mean[nonempty] = sums[nonempty] / count[nonempty]
    var = np.maximum(sumsq[nonempty] / count[nonempty] - mean[nonempty] ** 2, 0.0)
    std[nonempty] = np.sqrt(var)
    return RadialProfile(
        bin_edges=binning.edges, mean=mean, std=std, count=count
    )


def combine_profiles(profiles: list[RadialProfile]) -> RadialProfile:
    """Pool per-image profiles sharing one binning into an aggregate."""
    if not profiles:
        raise EmptyMask("no profiles to combine")
    edges = profiles[0].bin_edges
    for p in profiles[1:]:
        if not np.array_equal(p.bin_edges, edges):
            raise EmptyMask("profiles use different binnings")
    count = np.sum([p.count for p in profiles], axis=0)
    sums = np.zeros(len(edges) - 1)
    sumsq = np.zeros(len(edges) - 1)
    for p in profiles:
        has = p.count > 0
        sums[has] += p.mean[has] * p.count[has]
        sumsq[has] += (p.std[has] ** 2 + p.mean[has] ** 2) * p.count[has]
    mean = np.full(len(edges) - 1, np.nan)
    std = np.full(len(edges) - 1, np.nan)
    nonempty = count > 0
    mean[nonempty] = sums[nonempty] / count[nonempty]
    var = np.maximum(sumsq[nonempty] / count[nonempty] - mean[nonempty] ** 2, 0.0)
    std[nonempty] = np.sqrt(var)
    return RadialProfile(bin_edges=edges, mean=mean, std=std, count=count)


def _json_num(x: float):
    return float(x) if math.isfinite(x) else None


def depth_report_to_dict(report: DepthReport) -> dict:
    return {
        "mre": _json_num(report.mre),
        "mae": _json_num(report.mae),
        "rmse": _json_num(report.rmse),
        "rmse_log": _json_num(report.rmse_log),
        "delta1": _json_num(report.delta1),
        "delta2": _json_num(report.delta2),
        "delta3": _json_num(report.delta3),
        "n": report.n,
    }


def seg_report_to_dict(report: SegReport) -> dict:
    return {
        "miou": _json_num(report.miou),
        "macc": _json_num(report.macc),
        "per_class_iou": [_json_num(v) for v in report.per_class_iou],
    }


def profile_to_csv(profile: RadialProfile) -> str:
    lines = ["bin_lo,bin_hi,mean,std,count"]
    for b in range(len(profile.bin_edges) - 1):
        lines.append(
            f"{profile.bin_edges[b]:.6f},{profile.bin_edges[b + 1]:.6f},"
            f"{profile.mean[b]:.9g},{profile.std[b]:.9g},{int(profile.count[b])}"
        )
    return "\n".join(lines) + "\n"
