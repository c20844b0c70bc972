"""Command-line entry point: ``gen``, ``estimate``, ``eval`` and ``bench``.

Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .core import CameraIntrinsics, ConfigurationError, DisparityImage, InvalidInputError, NormalForgeError
from .dataset import DirectoryDataset, generate_frames, write_dataset
from .evaluation import DEFAULT_PHIS, benchmark, error_map, summarize
from .methods import METHOD_NAMES, get_disparity_method, get_method, parse_method_list
from .synth import NOISE_PRESETS, make_mesh, read_obj, sample_viewpoints

log = logging.getLogger("normalforge")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flag values detected after argparse (exit code 2)."""


def _default_seed() -> int:
    raw = os.environ.get("NORMALFORGE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"NORMALFORGE_SEED must be an integer, got {raw!r}") from None


def _phi_list(text: str) -> List[float]:
    try:
        phis = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --phi list {text!r}") from None
    if not phis or any(not (p >= 0) for p in phis):
        raise argparse.ArgumentTypeError("--phi needs non-negative angles in degrees")
    return phis


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {n}")
    return n


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.obj:
        mesh = read_obj(args.obj)
    else:
        params = {}
        if args.shape in ("sphere", "icosphere"):
            params = {"radius": args.size, "subdiv": args.subdiv}
        elif args.shape == "plane":
            params = {"width": args.size, "height": args.size}
        elif args.shape == "torus":
            params = {"R": args.size, "r": args.size / 4}
        elif args.shape == "heightfield":
            params = {"size": args.size, "seed": seed}
        mesh = make_mesh(args.shape, **params)
    center = mesh.centroid
    bound = mesh.bounding_radius(center)
    distance = args.distance if args.distance is not None else 3.0 * bound
    K = CameraIntrinsics(args.fx, args.fy if args.fy is not None else args.fx,
                         args.u0 if args.u0 is not None else (args.width - 1) / 2.0,
                         args.v0 if args.v0 is not None else (args.height - 1) / 2.0,
                         args.t_c)
    poses = sample_viewpoints(args.views, distance, seed=seed, center=center, bounding_radius=bound)
    noise = None if args.noise == "none" else args.noise
    frames = generate_frames(mesh, K, poses, args.width, args.height, noise=noise, sigma=args.sigma,
                             seed=seed, threads=args.threads)
    write_dataset(frames, args.out)
    print(f"wrote {len(frames)} frames to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate


def _load_input(path: Path, disparity: bool, png_scale: float):
    if path.suffix.lower() == ".png":
        img = io.read_png16_depth(path, png_scale)
    else:
        img = io.read_depth_pfm(path)
    if disparity:
        return DisparityImage(img.values, img.mask)
    return img


def _estimate_one(src: Path, dst: Path, viz: Optional[Path], K, fn, args):
    img = _load_input(src, args.disparity, args.png_scale)
    normals = fn(img, K)
    io.write_normals_pfm(dst, normals)
    if viz is not None:
        io.write_normal_png(viz, normals)
    return normals


def cmd_estimate(args) -> int:
    # method and intrinsics problems are usage errors, so check them before any file is read
    fn = get_disparity_method(args.method) if args.disparity else get_method(args.method)
    K = io.read_intrinsics_json(args.intrinsics)
    if args.disparity:
        K.stereo_focal()
    src = Path(args.input)
    if src.is_dir():
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        inputs = sorted(src.glob("*_depth.pfm"))
        if not inputs:
            raise FileNotFoundError(f"no *_depth.pfm frames in {src}")
        for p in inputs:
            stem = p.name[: -len("_depth.pfm")]
            viz = out_dir / f"{stem}_normals.png" if args.viz else None
            _estimate_one(p, out_dir / f"{stem}_normals.pfm", viz, K, fn, args)
        print(f"wrote {len(inputs)} normal maps to {out_dir}")
    else:
        if not src.exists():
            raise FileNotFoundError(f"input {src} does not exist")
        viz = Path(args.viz) if args.viz else None
        normals = _estimate_one(src, Path(args.output), viz, K, fn, args)
        print(f"{args.method}: {int(normals.mask.sum())} valid normals -> {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _pairs(pred: Path, gt: Path):
    if pred.is_dir() != gt.is_dir():
        raise UsageError("--pred and --gt must both be files or both be directories")
    if not pred.is_dir():
        return [(pred.stem, pred, gt)]
    pairs = []
    for g in sorted(gt.glob("*_gt.pfm")):
        stem = g.name[: -len("_gt.pfm")]
        for cand in (pred / f"{stem}_normals.pfm", pred / f"{stem}.pfm"):
            if cand.exists():
                pairs.append((stem, cand, g))
                break
        else:
            raise FileNotFoundError(f"no prediction for frame {stem} in {pred}")
    if not pairs:
        raise FileNotFoundError(f"no *_gt.pfm frames in {gt}")
    return pairs


def cmd_eval(args) -> int:
    pred, gt = Path(args.pred), Path(args.gt)
    for p in (pred, gt):
        if not p.exists():
            raise FileNotFoundError(f"{p} does not exist")
    names, errs = [], []
    for stem, p, g in _pairs(pred, gt):
        pm, gm = io.read_normals_pfm(p), io.read_normals_pfm(g)
        if pm.shape != gm.shape:
            raise InvalidInputError(f"shape mismatch for {stem}: prediction {pm.shape} vs ground truth {gm.shape}")
        emap = error_map(pm, gm)
        names.append(stem)
        errs.append(emap.values[emap.mask])
    report = summarize(errs, names, [0.0] * len(errs), args.phi, method=args.method or pred.name,
                       dataset=gt.name)
    if args.report:
        io.write_report(report, args.report)
    eps = "  ".join(f"e_P({p:g})={report.e_P[p]:.4f}" for p in args.phi)
    print(f"e_A={report.e_A:.6f} deg  {eps}  m={report.m}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    methods = parse_method_list(args.methods)
    dataset = DirectoryDataset(args.dataset)
    reports = []
    for name in methods:
        log.info("benchmarking %s", name)
        reports.append(benchmark(name, dataset, repetitions=args.repetitions, phis=args.phi))
    io.print_table(reports)
    if args.report:
        io.write_report(reports, args.report)
    for r in reports:
        for f in r.frames:
            if f.error:
                print(f"warning: {r.method} failed on frame {f.frame}: {f.error}", file=sys.stderr)
    if all(r.m == 0 and r.failed_frames for r in reports):
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="normalforge", description="Surface normals from depth images.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render a synthetic depth dataset")
    g.add_argument("--shape", choices=["plane", "sphere", "icosphere", "torus", "heightfield"], default="sphere")
    g.add_argument("--obj", help="load a v/f mesh file instead of a procedural shape")
    g.add_argument("--size", type=float, default=1.0, help="shape scale (sphere radius, plane side, torus major radius)")
    g.add_argument("--subdiv", type=int, default=4, help="icosphere subdivision level")
    g.add_argument("--views", type=_positive_int, default=10)
    g.add_argument("--distance", type=float, help="camera distance from the object centroid")
    g.add_argument("--width", type=int, default=640)
    g.add_argument("--height", type=int, default=480)
    g.add_argument("--fx", type=float, default=500.0)
    g.add_argument("--fy", type=float)
    g.add_argument("--u0", type=float)
    g.add_argument("--v0", type=float)
    g.add_argument("--t_c", "--t-c", dest="t_c", type=float, help="stereo baseline stored in intrinsics.json")
    g.add_argument("--noise", choices=["none"] + sorted(NOISE_PRESETS), default="none")
    g.add_argument("--sigma", type=float, help="absolute noise sigma in meters (overrides --noise)")
    g.add_argument("--seed", type=int, help="defaults to $NORMALFORGE_SEED or 0")
    g.add_argument("--threads", type=_positive_int, default=1, help="render frames in parallel")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("estimate", help="estimate normals for a depth/disparity frame or directory")
    e.add_argument("--input", required=True, help="PFM or 16-bit PNG file, or a dataset directory")
    e.add_argument("--intrinsics", required=True)
    e.add_argument("--method", default="fd-median", help=f"one of: {', '.join(METHOD_NAMES)}")
    e.add_argument("--output", required=True, help="3-channel PFM (or a directory for directory input)")
    e.add_argument("--viz", nargs="?", const=True, default=None,
                   help="also write a PNG visualisation (path for single-file input)")
    e.add_argument("--disparity", action="store_true", help="input holds disparity instead of depth")
    e.add_argument("--png-scale", type=float, default=0.001, help="meters per unit for PNG input")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("eval", help="score predicted normals against ground truth")
    v.add_argument("--pred", required=True)
    v.add_argument("--gt", required=True)
    v.add_argument("--phi", type=_phi_list, default=list(DEFAULT_PHIS), help="comma-separated tolerances in degrees")
    v.add_argument("--method", help="label stored in the report")
    v.add_argument("--report", help="JSON or CSV output path (by extension)")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time and score methods on a dataset directory")
    b.add_argument("--dataset", required=True)
    b.add_argument("--methods", default="all", help="comma-separated names or 'all'")
    b.add_argument("--repetitions", type=_positive_int, default=5)
    b.add_argument("--phi", type=_phi_list, default=list(DEFAULT_PHIS))
    b.add_argument("--threads", type=_positive_int, default=1,
                   help="accepted for symmetry; estimation is always timed single-threaded")
    b.add_argument("--report", help="JSON or CSV output path (by extension)")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "estimate" and args.viz is True:
        if not Path(args.input).is_dir():
            args.viz = str(Path(args.output).with_suffix(".png"))
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"normalforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NormalForgeError, OSError) as exc:
        print(f"normalforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
