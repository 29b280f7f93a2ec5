"""Command-line interface.

One binary, six subcommands: offset generation (gen-offsets), fisheye
synthesis from panoramas (synth-fisheye), perspective rectification
(rectify), tensor convolution (conv), kernel-footprint rendering (viz)
and metric evaluation (metrics).

Exit codes: 0 success, 2 usage/input error, 3 domain infeasibility
(field-of-view), 4 numerical failure (no convergence).  Worker
parallelism is capped by the KBCONV_THREADS environment variable
(0 = all cores).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibration
from .conv import ConvParams, conv2d, deform_conv2d
from .errors import FovExceeded, KbconvError, NoConvergence
from .formats import read_kbof, read_kbtn, write_kbof, write_kbtn
from .grid import Grid
from .image_io import (
    read_depth,
    read_image,
    read_labels,
    write_depth,
    write_image,
    write_labels,
    write_pgm,
)
from .kernel import (
    KernelSpec,
    build_kernel_grid,
    kernel_offsets_at,
    offset_field,
    rescale_calibration,
    tap_offsets,
)
from .metrics import (
    RadialBinning,
    combine_profiles,
    depth_metrics,
    depth_report_to_dict,
    profile_to_csv,
    radial_bins,
    radial_profile,
    seg_metrics,
    seg_report_to_dict,
)
from .warp import (
    Orientation,
    PerspectiveIntrinsics,
    equirect_to_fisheye,
    fisheye_to_perspective,
    random_orientation,
    valid_mask,
)

# deterministic footprint colors, indexed by anchor number
PALETTE = [
    (230, 60, 60),
    (60, 170, 230),
    (90, 200, 90),
    (240, 180, 40),
    (200, 90, 220),
    (80, 220, 200),
    (240, 120, 40),
    (150, 150, 240),
]


def _parse_pair(text: str, what: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise KbconvError(f"cannot parse {what} '{text}', expected AxB") from exc


def _parse_persp(text: str) -> PerspectiveIntrinsics:
    """Parse WxH:FX,FY,CX,CY or WxH:fov=DEG."""
    try:
        dims, rest = text.split(":", 1)
        w, h = _parse_pair(dims, "perspective dims")
        if rest.startswith("fov="):
            return PerspectiveIntrinsics.from_hfov(w, h, float(rest[4:]))
        fx, fy, cx, cy = (float(v) for v in rest.split(","))
    except (ValueError, KbconvError) as exc:
        if isinstance(exc, FovExceeded):
            raise
        raise KbconvError(
            f"cannot parse perspective spec '{text}', expected "
            f"WxH:FX,FY,CX,CY or WxH:fov=DEG"
        ) from exc
    return PerspectiveIntrinsics(width=w, height=h, fx=fx, fy=fy, cx=cx, cy=cy)


def _parse_anchors(text: str) -> list[tuple[float, float]]:
    anchors = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        u, v = (float(x) for x in part.split(","))
        anchors.append((u, v))
    return anchors


def _kernel_spec(args, calib) -> KernelSpec:
    ki, kj = _parse_pair(args.kernel, "kernel dims")
    if args.fm:
        fm_w, fm_h = _parse_pair(args.fm, "feature-map dims")
    else:
        fm_w, fm_h = calib.width, calib.height
    pad_w, pad_h = _parse_pair(args.pad, "padding") if args.pad else (0, 0)
    return KernelSpec(ki=ki, kj=kj, fm_width=fm_w, fm_height=fm_h,
                      pad_w=pad_w, pad_h=pad_h)


def cmd_gen_offsets(args) -> int:
    calib = calibration.load(args.calib)
    spec = _kernel_spec(args, calib)
    field = offset_field(calib, spec)
    write_kbof(field, args.out)
    n_invalid = int(np.sum(~field.valid))
    max_mag = float(np.max(np.hypot(field.data[..., 0], field.data[..., 1])))
    print(
        f"offset field {field.width}x{field.height} kernel "
        f"{field.kh}x{field.kw}: max |offset| {max_mag:.4f} px, "
        f"{n_invalid} invalid anchors -> {args.out}"
    )
    return 0


def cmd_synth_fisheye(args) -> int:
    calib = calibration.load(args.calib)
    if args.kind == "depth":
        pano = read_depth(args.infile)
        interp = "bilinear"
    elif args.kind == "labels":
        pano = Grid(read_labels(args.infile).astype(np.float64))
        interp = "nearest"
    else:
        pano = read_image(args.infile)
        interp = "bilinear"

    if args.random_orient:
        orient = random_orientation(np.random.default_rng(args.seed))
    else:
        orient = Orientation.identity()

    out = equirect_to_fisheye(pano, calib, orient, interp=interp)
    out_path = Path(args.out)
    if args.kind == "depth":
        write_depth(out, out_path)
    elif args.kind == "labels":
        write_labels(out.data[0].astype(np.int64), out_path,
                     maxval=int(max(255, out.data.max())))
    else:
        write_image(out, out_path)

    mask = valid_mask(calib)
    mask_path = out_path.parent / (out_path.stem + ".mask.pgm")
    write_pgm(mask.data[0] * 255, mask_path, maxval=255)

    sidecar = {
        "calibration": calibration.to_dict(calib),
        "orientation": orient.rotation.tolist(),
        "seed": args.seed if args.random_orient else None,
        "kind": args.kind,
    }
    sidecar_path = out_path.parent / (out_path.stem + ".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    print(f"synthesized {out.width}x{out.height} fisheye -> {out_path} "
          f"(+ {mask_path.name}, {sidecar_path.name})")
    return 0


def cmd_rectify(args) -> int:
    calib = calibration.load(args.calib)
    persp = _parse_persp(args.persp)
    img = read_image(args.infile)
    out = fisheye_to_perspective(img, calib, persp)
    write_image(out, args.out)
    print(f"rectified to {persp.width}x{persp.height} -> {args.out}")
    return 0


def cmd_conv(args) -> int:
    x = read_kbtn(args.infile)
    weights = read_kbtn(args.weights)
    bias = read_kbtn(args.bias) if args.bias else None
    params = ConvParams(stride=args.stride, border=args.border, bias=bias)
    grid = Grid(x)
    if args.offsets:
        out = deform_conv2d(grid, weights, read_kbof(args.offsets), params)
    else:
        out = conv2d(grid, weights, params)
    write_kbtn(out.data, args.out)
    print(f"conv output {out.channels}x{out.height}x{out.width} -> {args.out}")
    return 0


def _draw_cross(canvas: np.ndarray, u: float, v: float, color) -> None:
    h, w = canvas.shape[1:]
    ui, vi = int(round(u)), int(round(v))
    for du, dv in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]:
        uu, vv = ui + du, vi + dv
        if 0 <= uu < w and 0 <= vv < h:
            canvas[:, vv, uu] = color


def cmd_viz(args) -> int:
    calib = calibration.load(args.calib)
    spec = _kernel_spec(args, calib)
    scaled = rescale_calibration(calib, spec)
    grid = build_kernel_grid(spec, calib.fov)

    if args.infile:
        base = read_image(args.infile)
        canvas = base.data.copy()
        if canvas.shape[0] == 1:
            canvas = np.repeat(canvas, 3, axis=0)
    else:
        canvas = np.repeat(valid_mask(calib).data * 60.0, 3, axis=0)
    img_h, img_w = canvas.shape[1:]

    # feature-map to image coordinates (exact for pad = 0)
    sx = (calib.width + spec.pad_w) / spec.fm_width
    sy = (calib.height + spec.pad_h) / spec.fm_height
    ii, jj = tap_offsets(spec.ki, spec.kj)

    anchors = _parse_anchors(args.anchors) if args.anchors else []
    drawn = 0
    for idx, (u0, v0) in enumerate(anchors):
        if not (0 <= u0 < spec.fm_width and 0 <= v0 < spec.fm_height):
            print(f"warning: anchor ({u0:g}, {v0:g}) outside the feature map, "
                  f"skipped", file=sys.stderr)
            continue
        try:
            off = kernel_offsets_at((u0, v0), grid, scaled)
        except KbconvError:
            print(f"warning: anchor ({u0:g}, {v0:g}) not back-projectable, "
                  f"skipped", file=sys.stderr)
            continue
        color = PALETTE[idx % len(PALETTE)]
        pos_u = (u0 + jj + off[..., 0]) * sx - spec.pad_w / 2.0
        pos_v = (v0 + ii + off[..., 1]) * sy - spec.pad_h / 2.0
        for pu, pv in zip(pos_u.ravel(), pos_v.ravel()):
            if 0 <= pu < img_w and 0 <= pv < img_h:
                _draw_cross(canvas, pu, pv, color)
        drawn += 1
    write_image(Grid(canvas), args.out)
    print(f"rendered {drawn} kernel footprints -> {args.out}")
    return 0


def _pair_paths(pred: str, gt: str) -> list[tuple[str, Path, Path]]:
    p, g = Path(pred), Path(gt)
    if p.is_dir() != g.is_dir():
        raise KbconvError("--pred and --gt must both be files or both dirs")
    if not p.is_dir():
        return [(p.stem, p, g)]
    names = sorted(f.name for f in p.iterdir() if f.is_file())
    gt_names = {f.name for f in g.iterdir() if f.is_file()}
    pairs = [(Path(n).stem, p / n, g / n) for n in names if n in gt_names]
    if not pairs:
        raise KbconvError("no matching prediction/ground-truth file names")
    return pairs


def cmd_metrics(args) -> int:
    calib = calibration.load(args.calib)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = _pair_paths(args.pred, args.gt)

    reports = []
    profiles = []
    for stem, pred_path, gt_path in pairs:
        if args.task == "depth":
            pred = read_depth(pred_path).data[0]
            gt = read_depth(gt_path).data[0]
            pair_mask = gt > 0
            report = depth_metrics(pred, gt, pair_mask)
            payload = depth_report_to_dict(report)
            per_pixel = np.abs(pred - gt)
        else:
            pred = read_labels(pred_path)
            gt = read_labels(gt_path)
            pair_mask = gt != args.ignore
            report = seg_metrics(pred, gt, args.n_classes, ignore=args.ignore)
            payload = seg_report_to_dict(report)
            per_pixel = (pred == gt).astype(np.float64)

        binning = radial_bins(calib, gt.shape, args.bins)
        idx = binning.indices.copy()
        idx[~pair_mask] = -1
        profile = radial_profile(
            per_pixel, RadialBinning(indices=idx, edges=binning.edges)
        )

        (out_dir / f"{stem}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        (out_dir / f"{stem}.csv").write_text(profile_to_csv(profile),
                                             encoding="utf-8")
        reports.append(payload)
        profiles.append(profile)

    aggregate = {"n_pairs": len(pairs), "mean": _mean_of_reports(reports)}
    (out_dir / "aggregate.json").write_text(
        json.dumps(aggregate, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "aggregate.csv").write_text(
        profile_to_csv(combine_profiles(profiles)), encoding="utf-8"
    )
    print(f"evaluated {len(pairs)} pair(s) -> {out_dir}")
    return 0


def _mean_of_reports(reports: list[dict]) -> dict:
    keys = [k for k, v in reports[0].items() if isinstance(v, (int, float))]
    out = {}
    for k in keys:
        values = [r[k] for r in reports if r[k] is not None]
        out[k] = float(np.mean(values)) if values else None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbconv",
        description="Calibration-aware deformable convolutions for "
                    "fisheye cameras",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_calib(p):
        p.add_argument("--calib", required=True, help="calibration JSON path")

    def add_kernel(p):
        p.add_argument("--kernel", required=True, help="kernel dims KxK")
        p.add_argument("--fm", help="feature-map dims WxH "
                                    "(default: calibration resolution)")
        p.add_argument("--pad", help="total input padding WxH (default 0x0)")

    p = sub.add_parser("gen-offsets", help="compute and export an offset field")
    add_calib(p)
    add_kernel(p)
    p.add_argument("--out", required=True, help="output KBOF path")
    p.set_defaults(func=cmd_gen_offsets)

    p = sub.add_parser("synth-fisheye",
                       help="render a fisheye view of an equirectangular "
                            "panorama")
    add_calib(p)
    p.add_argument("--in", dest="infile", required=True,
                   help="equirectangular panorama (2:1)")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--kind", choices=["color", "depth", "labels"],
                   default="color")
    p.add_argument("--random-orient", action="store_true",
                   help="sample a random orientation (seeded)")
    p.add_argument("--seed", type=int, default=0, help="orientation seed")
    p.set_defaults(func=cmd_synth_fisheye)

    p = sub.add_parser("rectify", help="fisheye to perspective")
    add_calib(p)
    p.add_argument("--in", dest="infile", required=True, help="fisheye image")
    p.add_argument("--persp", required=True,
                   help="target intrinsics WxH:FX,FY,CX,CY or WxH:fov=DEG")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("conv", help="apply (deformable) convolution to a "
                                    "KBTN tensor")
    p.add_argument("--in", dest="infile", required=True, help="input KBTN")
    p.add_argument("--weights", required=True, help="weights KBTN "
                                                    "(out,in,kh,kw)")
    p.add_argument("--offsets", help="optional KBOF offset field")
    p.add_argument("--bias", help="optional per-output-channel bias KBTN")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--border", choices=["zero", "clamp"], default="zero")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_conv)

    p = sub.add_parser("viz", help="render kernel footprints on a fisheye "
                                   "image or blank disk")
    add_calib(p)
    add_kernel(p)
    p.add_argument("--anchors", default="",
                   help="semicolon-separated feature-map anchors 'u,v;u,v'")
    p.add_argument("--in", dest="infile", help="background fisheye image")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("metrics", help="evaluate predictions against ground "
                                       "truth")
    add_calib(p)
    p.add_argument("--task", choices=["depth", "seg"], required=True)
    p.add_argument("--pred", required=True, help="prediction file or dir")
    p.add_argument("--gt", required=True, help="ground-truth file or dir")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--bins", type=int, default=10, help="radial bins")
    p.add_argument("--n-classes", type=int, default=14,
                   help="segmentation class count")
    p.add_argument("--ignore", type=int, default=255,
                   help="segmentation ignore label")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FovExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (KbconvError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
