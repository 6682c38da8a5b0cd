"""Command-line front end: ``viewalign <command> ...``.

Commands follow the pipeline order::

    gen -> fit-intrinsics -> complete -> warp -> optimize -> render -> eval

``demo`` chains all of them on the bundled scene. Exit codes: 0 success,
2 usage or input error, 3 numerical failure. Settings resolve as command
line flag, then ``VIEWALIGN_*`` environment variable, then ``--config`` JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy.spatial.transform import Rotation

from . import io, synth
from .alignment import (
    AlignmentReport, CompletionConfig, SolverConfig, boundary_loss_uncorrected, complete_depth,
    fit_implicit_intrinsics,
)
from .errors import (
    DegenerateGeometryError, DivergenceError, DomainError, InsufficientDataError, NoSupervisionError,
    NoValidPixelsError, ParseError, ViewAlignError,
)
from .geometry import Camera, DepthConvention, DepthMap, ImageRGB, Intrinsics, Mask, SparseDepthSet, lift, relative_pose
from .losses import LossWeights, si_depth_loss, ssim
from .metrics import psnr_masked, warp_consistency
from .projection import composite, warp_image
from .schemas import EVAL_SCHEMA, REPORT_SCHEMA
from .splat import GaussianCloud, OptimizeConfig, View, optimize, render

logger = logging.getLogger("viewalign")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
ENV_PREFIX = "VIEWALIGN_"

GEN_DEFAULTS = {
    "anchor": 0,
    "object": 1,
    "dsd_scale": 1.0,
    "dsd_noise": 0.0,
    "mono_bias": {"kind": "scale", "c": 1.0},
    "sparse_count": 200,
    "sparse_pixel_noise": 0.0,
    "correspondences": 500,
}


class UsageError(Exception):
    """Bad arguments or inconsistent inputs (exit code 2)."""


def view_dir(root, i: int) -> Path:
    return Path(root) / f"view_{i:02d}"


def demo_scene_path() -> Path:
    return Path(str(resources.files("viewalign") / "data" / "demo_scene.json"))


# ---------------------------------------------------------------------------
# settings: flag > env > JSON


def resolve(name: str, flag, config: dict, default, cast=float):
    """First non-missing of flag, ``VIEWALIGN_<NAME>`` and ``config[name]``."""
    if flag is not None:
        return flag
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        try:
            return cast(env)
        except ValueError as e:
            raise UsageError(f"bad value for {ENV_PREFIX + name.upper()}: {env!r}") from e
    if name in config:
        return cast(config[name])
    return default


def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg = io.read_json(path)
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return cfg


def _weights(text) -> LossWeights:
    if isinstance(text, LossWeights):
        return text
    try:
        return LossWeights.parse(text)
    except (ValueError, DomainError) as e:
        raise UsageError(f"bad weights {text!r}: {e}") from e


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    spec = io.read_json(args.scene)
    try:
        scene = synth.SceneSpec.from_dict(spec)
    except jsonschema.ValidationError as e:
        raise UsageError(f"{args.scene}: invalid scene: {e.message}") from e
    gen = {**GEN_DEFAULTS, **scene.generation}
    seed = args.seed if args.seed is not None else scene.seed
    anchor, obj = int(gen["anchor"]), int(gen["object"])
    if not 0 <= anchor < len(scene.rig):
        raise UsageError(f"anchor {anchor} is not a camera index")
    scene._check_id(obj)
    clean = scene.without(obj)
    bias = synth.bias_from_dict(gen["mono_bias"])

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "scene.json", spec)
    views = []
    for i, cam in enumerate(scene.rig):
        vd = view_dir(out, i)
        vd.mkdir(exist_ok=True)
        full = synth.raycast(scene, cam)
        bare = synth.raycast(clean, cam)
        io.write_png(vd / "image.png", full.image)
        io.write_png(vd / "image_clean.png", bare.image)
        io.write_depth(vd / "gt_depth.pfm", full.depth)
        io.write_depth(vd / "gt_depth_clean.pfm", bare.depth)
        dsd = synth.make_dsd(full.depth, float(gen["dsd_scale"]), float(gen["dsd_noise"]), seed + i)
        io.write_depth(vd / "dsd_depth.pfm", dsd)
        io.write_depth(vd / "mono_depth.pfm", synth.make_mono(bare.depth, bias, seed + i))
        io.write_png(vd / "mask.png", Mask(full.primitive == obj))
        sparse = synth.sample_sfm(scene, cam, int(gen["sparse_count"]), float(gen["sparse_pixel_noise"]),
                                  seed + i, depth=full.depth)
        io.write_json(vd / "sparse.json", sparse.to_dict())
        io.write_json(vd / "camera.json", cam.to_dict())
        if i != anchor:
            corr = synth.correspondences(clean, scene.rig[anchor], cam, int(gen["correspondences"]), seed + i)
            io.write_json(vd / "correspondences.json",
                          {"anchor": anchor, "src": corr.src.tolist(), "dst": corr.dst.tolist()})
        views.append(vd.name)
        print(f"view {i}: {int(full.depth.valid.sum())} surface pixels, "
              f"{int((full.primitive == obj).sum())} object pixels")
    io.write_json(out / "rig.json", {"anchor": anchor, "object": obj, "seed": seed, "views": views})
    print(f"wrote {len(views)} views to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-intrinsics


def _read_intrinsics(path) -> Intrinsics:
    d = io.read_json(path)
    return Intrinsics.from_dict(d["intrinsics"] if "intrinsics" in d else d)


def solver_config(args) -> SolverConfig:
    cfg = _load_config(args.config)
    unknown = set(cfg) - set(SolverConfig().to_dict())
    if unknown:
        raise UsageError(f"unknown solver settings: {sorted(unknown)}")
    return SolverConfig(
        max_iters=resolve("max_iters", args.max_iters, cfg, 100, int),
        tol=resolve("tol", args.tol, cfg, 1e-10),
        damping_init=resolve("damping_init", None, cfg, 1e-3),
        use_projection_residual=bool(resolve("use_projection_residual", args.use_projection_residual or None, cfg,
                                             False, lambda s: str(s).lower() in ("1", "true", "yes"))),
    )


def cmd_fit_intrinsics(args) -> int:
    dsd = io.read_depth(args.dsd)
    sparse = SparseDepthSet.from_dict(io.read_json(args.sparse))
    init = _read_intrinsics(args.init)
    cfg = solver_config(args)
    rel = calibrated = None
    if cfg.use_projection_residual:
        if args.camera is None or args.target_camera is None:
            raise UsageError("the projection residual needs --camera and --target-camera")
        cam_a = Camera.from_dict(io.read_json(args.camera))
        cam_b = Camera.from_dict(io.read_json(args.target_camera))
        rel, calibrated = relative_pose(cam_a.pose, cam_b.pose), cam_a.intrinsics
    report = fit_implicit_intrinsics(dsd, sparse, init, cfg, rel, calibrated)
    out = report.to_dict()
    jsonschema.validate(out, REPORT_SCHEMA)
    io.write_json(args.report, out)
    print(f"scale {report.scale:.9g}, residual {report.residual:.3g}, {report.iterations} iterations")
    return EXIT_OK


# ---------------------------------------------------------------------------
# complete


def cmd_complete(args) -> int:
    dsd = io.read_depth(args.dsd)
    if args.report is not None:
        scale = AlignmentReport.from_dict(io.read_json(args.report)).scale
        dsd = dsd.scaled(scale, DepthConvention.METRIC)
    mono = io.read_depth(args.mono)
    mask = io.read_mask_png(args.mask)
    cfg = CompletionConfig(max_iters=resolve("completion_max_iters", args.max_iters, {}, 100, int))
    refined, corrector, loss = complete_depth(mono, dsd, mask, args.radius, cfg)
    io.write_depth(args.out, refined)
    base = boundary_loss_uncorrected(mono, dsd, mask, args.radius)
    if args.summary is not None:
        io.write_json(args.summary, {"params": corrector.params().tolist(), "boundary_loss": loss,
                                     "boundary_loss_uncorrected": base})
    print(f"boundary loss {base:.4g} -> {loss:.4g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# warp


def cmd_warp(args) -> int:
    root = Path(args.views)
    rig = io.read_json(root / "rig.json")
    anchor = rig["anchor"] if args.anchor is None else args.anchor
    a_dir, t_dir = view_dir(root, anchor), view_dir(root, args.target)
    cam_a = Camera.from_dict(io.read_json(a_dir / "camera.json"))
    cam_t = Camera.from_dict(io.read_json(t_dir / "camera.json"))
    depth = io.read_depth(args.depth if args.depth else a_dir / "dsd_depth.pfm")
    K_src = cam_a.intrinsics
    if args.report is not None:
        report = AlignmentReport.from_dict(io.read_json(args.report))
        if depth.convention is DepthConvention.RELATIVE:
            depth = depth.scaled(report.scale, DepthConvention.METRIC)
        if args.use_ktilde:
            K_src = report.intrinsics
    elif args.use_ktilde:
        raise UsageError("--use-ktilde needs --report from fit-intrinsics")
    anchor_img = io.read_image(a_dir / args.anchor_image)
    rel = relative_pose(cam_a.pose, cam_t.pose)
    warped, holes, _ = warp_image(anchor_img, depth, rel, K_src, cam_t.intrinsics, (cam_t.height, cam_t.width))

    target = io.read_image(t_dir / "image.png")
    region = io.read_mask_png(t_dir / "mask.png")
    comp = composite(warped, holes, target, region)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_png(out / "warped.png", warped)
    io.write_png(out / "holes.png", holes)
    io.write_png(out / "composite.png", comp)
    msg = f"warped view {anchor} -> {args.target}: {holes.count()} hole pixels"
    clean = t_dir / "image_clean.png"
    if clean.exists() and region.count() > 0:
        p = psnr_masked(comp, io.read_image(clean), region)
        msg += f", masked PSNR vs clean target {p:.2f} dB"
    print(msg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize / render


def load_views(root, image_name: str, depth_name: str) -> list[View]:
    root = Path(root)
    rig = io.read_json(root / "rig.json")
    views = []
    for name in rig["views"]:
        vd = root / name
        cam = Camera.from_dict(io.read_json(vd / "camera.json"))
        depth = io.read_depth(vd / depth_name)
        views.append(View(cam, io.read_image(vd / image_name), depth, Mask(depth.valid)))
    return views


def init_from_depth(cam: Camera, image: ImageRGB, depth: DepthMap, n: int, seed: int) -> GaussianCloud:
    """``n`` Gaussians lifted from random valid pixels of one view."""
    flat = np.flatnonzero(depth.valid.ravel())
    if n > len(flat):
        raise InsufficientDataError(f"{n} Gaussians requested but only {len(flat)} valid depth pixels")
    pick = np.sort(synth.rng_for(seed).choice(flat, size=n, replace=False))
    px = np.stack([pick % depth.width, pick // depth.width], axis=1).astype(np.float64)
    z = depth.values.ravel()[pick]
    world = cam.pose.inverse().apply(lift(px, z, cam.intrinsics))
    # footprint of one cell of an n-point grid over the image, at each depth
    cell = math.sqrt(depth.width * depth.height / n)
    s = 0.5 * cell * z / cam.intrinsics.fx
    scale = np.stack([s, s, np.maximum(0.2 * s, 1e-3)], axis=1)
    rot = np.tile(quat_from_rotmat(cam.pose.rotation.T), (n, 1))
    color = image.pixels.reshape(-1, 3)[pick]
    return GaussianCloud(world, scale, rot, color, np.full(n, 0.8))


def quat_from_rotmat(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix."""
    x, y, z, w = Rotation.from_matrix(np.asarray(R)).as_quat()
    return np.array([w, x, y, z])


def optimize_config(args, cfg: dict) -> OptimizeConfig:
    base = OptimizeConfig()
    return OptimizeConfig(
        steps=resolve("steps", args.steps, cfg, base.steps, int),
        divergence_threshold=resolve("divergence_threshold", args.divergence_threshold, cfg,
                                     base.divergence_threshold),
        **{k: float(cfg[k]) for k in ("lr_mu", "lr_scale", "lr_rot", "lr_color", "lr_opacity") if k in cfg},
    )


def write_trace(path, result) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "total", "si", "l1", "ssim", "smoothed"])
        for i, (t, s, parts) in enumerate(zip(result.trace, result.smoothed, result.breakdown), start=1):
            w.writerow([i, repr(t), repr(parts["si"]), repr(parts["l1"]), repr(parts["ssim"]), repr(s)])


def cmd_optimize(args) -> int:
    cfg = _load_config(args.config)
    weights = _weights(resolve("weights", args.weights, cfg, LossWeights(), str))
    seed = resolve("seed", args.seed, cfg, 0, int)
    ocfg = optimize_config(args, cfg)
    views = load_views(args.views, args.image_name, args.depth_name)
    if args.init is not None:
        cloud = io.read_gaussians_ply(args.init)
    else:
        root = Path(args.views)
        anchor = io.read_json(root / "rig.json")["anchor"]
        ad = view_dir(root, anchor)
        depth_path = ad / args.init_depth
        if not depth_path.exists():
            raise UsageError(f"no initialization depth at {depth_path}; pass --init or --init-depth")
        cloud = init_from_depth(views[anchor].camera, views[anchor].target, io.read_depth(depth_path),
                                resolve("gaussians", args.gaussians, cfg, 50, int), seed)

    def progress(step, loss, parts):
        if step == 1 or step % args.log_every == 0:
            print(f"step {step:5d}  loss {loss:.6g}")

    try:
        result = optimize(cloud, views, weights, ocfg, callback=progress)
    except DivergenceError as e:
        write_trace_partial(args.trace, e.trace)
        raise
    io.write_gaussians_ply(args.out, result.gaussians)
    write_trace(args.trace, result)
    print(f"final loss {result.trace[-1]:.6g} after {len(result.trace)} steps")
    return EXIT_OK


def write_trace_partial(path, trace) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "total"])
        for i, t in enumerate(trace, start=1):
            w.writerow([i, repr(t)])


def cmd_render(args) -> int:
    cloud = io.read_gaussians_ply(args.gaussians)
    cam = Camera.from_dict(io.read_json(args.camera))
    res = render(cloud, cam)
    io.write_image(args.out, res.image)
    if args.depth is not None:
        io.write_depth(args.depth, res.depth)
    print(f"rendered {cam.width}x{cam.height}, coverage {float(res.depth.valid.mean()):.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def evaluate(render_img: ImageRGB, gt: ImageRGB, mask: Mask, depth_pair=None, warp=None) -> dict:
    """Metrics of the ``eval`` command as a plain dict."""
    out = {
        "psnr_masked": psnr_masked(render_img, gt, mask),
        "ssim": ssim(render_img, gt),
        "warp_consistency": None,
        "l_si": None,
    }
    if depth_pair is not None:
        rendered, predicted = depth_pair
        out["l_si"] = si_depth_loss(rendered, predicted)
    if warp is not None:
        depth, cam_a, cam_b, src, dst = warp
        out["warp_consistency"] = warp_consistency(depth, relative_pose(cam_a.pose, cam_b.pose), cam_a.intrinsics,
                                                   cam_b.intrinsics, src, dst)
    return out


def cmd_eval(args) -> int:
    render_img, gt = io.read_image(args.render), io.read_image(args.gt)
    mask = io.read_mask_png(args.mask)
    pair = None
    if args.depth:
        pair = (io.read_depth(args.depth[0]), io.read_depth(args.depth[1]))
    warp = None
    if args.warp:
        depth_p, cam_a_p, cam_b_p, corr_p = args.warp
        corr = io.read_json(corr_p)
        warp = (io.read_depth(depth_p), Camera.from_dict(io.read_json(cam_a_p)),
                Camera.from_dict(io.read_json(cam_b_p)), np.asarray(corr["src"], dtype=np.float64),
                np.asarray(corr["dst"], dtype=np.float64))
    out = evaluate(render_img, gt, mask, pair, warp)
    jsonschema.validate(out, EVAL_SCHEMA)
    io.write_json(args.out, out)
    print(", ".join(f"{k} {v:.6g}" if v is not None else f"{k} n/a" for k, v in out.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# demo


def cmd_demo(args) -> int:
    """gen -> fit-intrinsics -> complete -> warp -> optimize -> render -> eval."""
    out = Path(args.outdir)
    seed = str(args.seed)
    v = lambda i, name: str(view_dir(out / "views", i) / name)  # noqa: E731
    scene = args.scene or str(demo_scene_path())
    steps = [
        ["gen", scene, str(out / "views"), "--seed", seed],
        ["fit-intrinsics", v(0, "dsd_depth.pfm"), v(0, "sparse.json"), "--init", v(0, "camera.json"),
         "--report", str(out / "fit.json")],
        ["complete", v(0, "dsd_depth.pfm"), v(0, "mono_depth.pfm"), v(0, "mask.png"),
         v(0, "refined_depth.pfm"), "--report", str(out / "fit.json"), "--summary", str(out / "complete.json")],
        ["warp", str(out / "views"), "1", "--depth", v(0, "refined_depth.pfm"), "--report", str(out / "fit.json"),
         "--use-ktilde", "--outdir", str(out / "warp_1")],
        ["optimize", str(out / "views"), str(out / "gaussians.ply"), str(out / "trace.csv"),
         "--steps", str(args.steps), "--seed", seed, "--init-depth", "refined_depth.pfm", "--log-every", "25"],
        ["render", str(out / "gaussians.ply"), v(1, "camera.json"), str(out / "render_1.png"),
         "--depth", str(out / "render_1.pfm")],
        ["eval", str(out / "render_1.png"), v(1, "image_clean.png"), v(1, "mask.png"),
         "--depth", str(out / "render_1.pfm"), v(1, "mono_depth.pfm"),
         "--warp", v(0, "refined_depth.pfm"), v(0, "camera.json"), v(1, "camera.json"),
         v(1, "correspondences.json"), "--out", str(out / "eval.json")],
    ]
    for argv in steps:
        print(f"== {argv[0]}")
        code = main(argv)
        if code != EXIT_OK:
            return code
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viewalign", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render a synthetic scene into per-view inputs")
    g.add_argument("scene", help="scene JSON")
    g.add_argument("outdir")
    g.add_argument("--seed", type=int, help="overrides the scene seed")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit-intrinsics", help="align stereo depth to sparse metric depth")
    f.add_argument("dsd", help="relative-scale depth PFM")
    f.add_argument("sparse", help="sparse depth JSON")
    f.add_argument("--init", required=True, help="intrinsics or camera JSON")
    f.add_argument("--report", required=True, help="output report JSON")
    f.add_argument("--config", help="solver config JSON (max_iters, tol, damping_init, use_projection_residual)")
    f.add_argument("--max-iters", type=int, help="default 100")
    f.add_argument("--tol", type=float, help="relative cost-drop stopping tolerance (default 1e-10)")
    f.add_argument("--use-projection-residual", action="store_true")
    f.add_argument("--camera", help="anchor camera JSON (projection residual)")
    f.add_argument("--target-camera", help="target camera JSON (projection residual)")
    f.set_defaults(func=cmd_fit_intrinsics)

    c = sub.add_parser("complete", help="fill the masked region with corrected mono depth")
    c.add_argument("dsd")
    c.add_argument("mono")
    c.add_argument("mask")
    c.add_argument("out", help="refined depth PFM")
    c.add_argument("--radius", type=int, default=2, help="boundary ring width in pixels")
    c.add_argument("--report", help="fit-intrinsics report; its scale is applied to the stereo depth first")
    c.add_argument("--summary", help="output JSON with corrector parameters and losses")
    c.add_argument("--max-iters", type=int)
    c.set_defaults(func=cmd_complete)

    w = sub.add_parser("warp", help="forward-warp the anchor view into a target view")
    w.add_argument("views", help="directory written by gen")
    w.add_argument("target", type=int, help="target view index")
    w.add_argument("--anchor", type=int, help="defaults to the anchor in rig.json")
    w.add_argument("--depth", help="anchor depth PFM (default: the anchor's dsd_depth.pfm)")
    w.add_argument("--report", help="fit-intrinsics report; scales relative-convention depth to metric")
    w.add_argument("--use-ktilde", action="store_true", help="lift with the fitted intrinsics")
    w.add_argument("--anchor-image", default="image_clean.png")
    w.add_argument("--outdir", required=True)
    w.set_defaults(func=cmd_warp)

    o = sub.add_parser("optimize", help="fit Gaussians to the views")
    o.add_argument("views", help="directory written by gen")
    o.add_argument("out", help="output Gaussian PLY")
    o.add_argument("trace", help="output loss trace CSV")
    o.add_argument("--weights", help="lambda_depth,lambda_color,lambda_ssim (default 0.5,0.8,0.2)")
    o.add_argument("--steps", type=int, help="optimizer steps (default 300)")
    o.add_argument("--seed", type=int, help="initialization seed (default 0)")
    o.add_argument("--config", help="optimizer config JSON; keys steps, seed, weights, gaussians, "
                   "divergence_threshold and step sizes lr_mu 2e-3, lr_scale 2e-3, lr_rot 5e-3, "
                   "lr_color 2e-2, lr_opacity 2e-2")
    o.add_argument("--init", help="initial Gaussian PLY")
    o.add_argument("--init-depth", default="gt_depth_clean.pfm", help="anchor depth to lift without --init")
    o.add_argument("--gaussians", type=int, help="count when lifting from depth (default 50)")
    o.add_argument("--image-name", default="image_clean.png")
    o.add_argument("--depth-name", default="mono_depth.pfm")
    o.add_argument("--divergence-threshold", type=float, help="abort (exit 3) above this loss (default 1e6)")
    o.add_argument("--log-every", type=int, default=50)
    o.set_defaults(func=cmd_optimize)

    r = sub.add_parser("render", help="render Gaussians from a camera")
    r.add_argument("gaussians")
    r.add_argument("camera")
    r.add_argument("out")
    r.add_argument("--depth", help="also write the rendered depth PFM")
    r.set_defaults(func=cmd_render)

    e = sub.add_parser("eval", help="masked PSNR, SSIM, warp consistency and depth loss")
    e.add_argument("render")
    e.add_argument("gt")
    e.add_argument("mask")
    e.add_argument("--depth", nargs=2, metavar=("RENDERED", "PREDICTED"))
    e.add_argument("--warp", nargs=4, metavar=("DEPTH", "CAM_A", "CAM_B", "CORR"))
    e.add_argument("--out", default="eval.json")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("demo", help="run the whole pipeline on the bundled scene")
    d.add_argument("outdir")
    d.add_argument("--scene", help="scene JSON (default: bundled demo)")
    d.add_argument("--steps", type=int, default=100)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_demo)
    return p


USAGE_ERRORS = (
    UsageError, ParseError, DomainError, InsufficientDataError, NoSupervisionError, NoValidPixelsError,
    FileNotFoundError, IsADirectoryError, KeyError, jsonschema.ValidationError, json.JSONDecodeError,
)
NUMERIC_ERRORS = (DivergenceError, DegenerateGeometryError, ArithmeticError, FloatingPointError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NUMERIC_ERRORS as e:
        print(f"viewalign {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except USAGE_ERRORS as e:
        msg = e.message if isinstance(e, jsonschema.ValidationError) else e
        print(f"viewalign {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ViewAlignError as e:
        print(f"viewalign {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
