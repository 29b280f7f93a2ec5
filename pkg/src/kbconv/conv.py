"""Dense 2D convolution, standard and deformable.

Cross-correlation convention (no kernel flip), accumulation in double
precision.  Padding is the caller's job: output dims follow
floor((in - k) / stride) + 1.  The deformable variant reads its sampling
positions from an OffsetField computed on the output grid; anchors the
field flags invalid fall back to the undeformed positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OffsetResolutionMismatch, ShapeMismatch
from .grid import Grid, bilinear_sample
from .kernel import OffsetField


@dataclass(frozen=True)
class ConvParams:
    stride: int = 1
    border: str = "zero"
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.stride < 1:
            raise ShapeMismatch("stride must be >= 1")
        if self.bias is not None:
            object.__setattr__(
                self, "bias", np.asarray(self.bias, dtype=np.float64).ravel()
            )


def _out_dims(h: int, w: int, kh: int, kw: int, stride: int) -> tuple[int, int]:
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatch(
            f"kernel {kh}x{kw} does not fit input {h}x{w} at stride {stride}"
        )
    return oh, ow


def _check_weights(input_grid: Grid, weights: np.ndarray, bias) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 4:
        raise ShapeMismatch("weights must have shape (out, in, kh, kw)")
    if weights.shape[1] != input_grid.channels:
        raise ShapeMismatch(
            f"weights expect {weights.shape[1]} input channels, "
            f"grid has {input_grid.channels}"
        )
    if bias is not None and bias.shape[0] != weights.shape[0]:
        raise ShapeMismatch("bias length must equal the output channel count")
    return weights


def conv2d(input_grid: Grid, weights, params: ConvParams = ConvParams()) -> Grid:
    """Direct dense cross-correlation plus optional per-channel bias.

    Taps accumulate in a fixed (channel, row, col) order, one fused add
    per tap, so the result is bit-identical to a scalar triple loop over
    the same order.
    """
    weights = _check_weights(input_grid, weights, params.bias)
    n_out, n_in, kh, kw = weights.shape
    oh, ow = _out_dims(input_grid.height, input_grid.width, kh, kw, params.stride)
    s = params.stride

    x = input_grid.data
    out = np.zeros((n_out, oh, ow), dtype=np.float64)
    for o in range(n_out):
        acc = out[o]
        for c in range(n_in):
            for i in range(kh):
                for j in range(kw):
                    window = x[c, i : i + s * (oh - 1) + 1 : s,
                               j : j + s * (ow - 1) + 1 : s]
                    acc += weights[o, c, i, j] * window
        if params.bias is not None:
            acc += params.bias[o]
    return Grid(out)


def deform_conv2d(
    input_grid: Grid,
    weights,
    offsets: OffsetField,
    params: ConvParams = ConvParams(),
) -> Grid:
    """Deformable cross-correlation driven by a precomputed offset field.

    Tap (i, j) of output position (v, u) samples the input bilinearly at
    (u*stride + j + du, v*stride + i + dv) with (du, dv) taken from
    ``offsets.data[v, u, i, j]``; invalid anchors use (0, 0) and thus
    reduce to the standard convolution there.
    """
    weights = _check_weights(input_grid, weights, params.bias)
    n_out, n_in, kh, kw = weights.shape
    oh, ow = _out_dims(input_grid.height, input_grid.width, kh, kw, params.stride)
    if (offsets.kh, offsets.kw) != (kh, kw):
        raise ShapeMismatch(
            f"offset field is for a {offsets.kh}x{offsets.kw} kernel, "
            f"weights are {kh}x{kw}"
        )
    if (offsets.height, offsets.width) != (oh, ow):
        raise OffsetResolutionMismatch(
            f"offset field {offsets.height}x{offsets.width} does not match "
            f"output {oh}x{ow}"
        )
    s = params.stride

    eff = np.where(offsets.valid[:, :, None, None, None], offsets.data, 0.0)
    base_u = np.arange(ow, dtype=np.float64)[None, :] * s
    base_v = np.arange(oh, dtype=np.float64)[:, None] * s

    out = np.zeros((n_out, oh, ow), dtype=np.float64)
    samples = np.empty((n_in, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            sx = base_u + j + eff[:, :, i, j, 0]
            sy = base_v + i + eff[:, :, i, j, 1]
            for c in range(n_in):
                samples[c] = bilinear_sample(input_grid.data[c], sx, sy,
                                             params.border)
            for o in range(n_out):
                for c in range(n_in):
                    out[o] += weights[o, c, i, j] * samples[c]
    if params.bias is not None:
        out += params.bias[:, None, None]
    return Grid(out)
