"""``pano-epipolar`` command line.

Machine-readable JSON goes to stdout, human messages to stderr.
Exit codes: 0 success, 1 I/O, 2 geometric degeneracy, 3 validation.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import attention as att
from . import dataset as ds
from . import epipolar as epi
from . import erp
from . import io
from . import metrics
from .pose import relative_pose
from .rays import EncodingConfig

log = logging.getLogger("pano_epipolar")

EXIT_OK, EXIT_IO, EXIT_DEGENERATE, EXIT_VALIDATION = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str, **details):
        super().__init__(message)
        self.code = code
        self.details = details


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _pair(text: str, sep: str, cast=float):
    try:
        a, b = text.lower().split(sep)
        return cast(a), cast(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two values separated by {sep!r}, got {text!r}")


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _read_image(path):
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_IO, f"missing file: {path}")
    if path.suffix.lower() == ".tnsr":
        arr = io.read_tnsr(path).astype(np.float64)
        return arr if arr.ndim == 3 else arr.reshape(arr.shape[0], arr.shape[1], -1)
    return io.read_png(path)


def _load_pose(path, index):
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_IO, f"missing file: {path}")
    data = json.loads(path.read_text())
    if data and not isinstance(data[0][0], list):
        data = [data]
    poses = io.parse_poses(data)
    if not 0 <= index < len(poses):
        raise CliError(EXIT_VALIDATION, f"pose index {index} out of range for {len(poses)} poses in {path}")
    return poses[index]


# --- epipolar -------------------------------------------------------------

def cmd_epipolar(args) -> int:
    width, height = args.size
    try:
        erp.check_erp_shape(width, height)
    except erp.DomainError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    pa = _load_pose(args.pose_a, args.index_a)
    pb = _load_pose(args.pose_b, args.index_b)
    x, y = args.pixel
    if not (0 <= x < width and 0 <= y <= height):
        raise CliError(EXIT_VALIDATION, f"pixel ({x}, {y}) outside a {width}x{height} panorama")
    background = None
    if args.image:
        background = _read_image(args.image)
        if background.shape[:2] != (height, width):
            raise CliError(EXIT_VALIDATION, f"--image is {background.shape[1]}x{background.shape[0]}, "
                                            f"expected {width}x{height}")
    if any(d <= 0 for d in args.oracle_depths):
        raise CliError(EXIT_VALIDATION, "oracle depths must be positive")

    rel = relative_pose(pa, pb)
    plane = epi.epipolar_plane((x, y), rel, width, height)
    if not plane.solvable:
        raise CliError(EXIT_DEGENERATE, plane.degeneracy.value, degeneracy=plane.degeneracy.name.lower())
    report = {
        "degeneracy": plane.degeneracy.name.lower(),
        "normal": [float(v) for v in plane.normal],
        "a1": plane.a1,
        "a2": plane.a2,
        "size": [width, height],
        "pixel": [x, y],
    }
    oracle = np.zeros((0, 2))
    if args.oracle_depths:
        oracle = epi.epipolar_oracle((x, y), rel, args.oracle_depths, width, height)
        dev = epi.curve_deviation(plane, oracle, width, height)
        report["oracle_pixels"] = oracle.tolist()
        report["max_oracle_deviation_rad"] = float(dev.max()) if len(dev) else 0.0
    vertices, mask = epi.rasterize_epipolar(plane, width, height)
    if plane.degeneracy is epi.Degeneracy.POLAR_CIRCLE:
        report["columns"] = list(epi.polar_columns(plane, width).columns)
    base = background if background is not None else np.zeros((height, width, 3))
    if args.out:
        io.write_png(args.out, epi.overlay(base, mask))
        report["overlay"] = str(args.out)
        report["overlay_pixels"] = int(mask.sum())
    if args.figure:
        from .plotting import epipolar_figure

        epipolar_figure(args.figure, width, height, vertices, oracle, background,
                        title=f"target pixel ({x:g}, {y:g})")
        report["figure"] = str(args.figure)
    _emit(report)
    return EXIT_OK


# --- images ---------------------------------------------------------------

def cmd_stitch(args) -> int:
    faces_dir = Path(args.faces)
    paths = {n: faces_dir / f"{n}.png" for n in erp.FACE_NAMES}
    missing = [str(p) for p in paths.values() if not p.is_file()]
    if missing:
        raise CliError(EXIT_IO, "missing cube faces: " + ", ".join(missing), missing=missing)
    faces = {n: io.read_png(p) for n, p in paths.items()}
    try:
        cube = erp.CubeMap(faces)
    except erp.DomainError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    if args.height < 2:
        raise CliError(EXIT_VALIDATION, "--height must be at least 2")
    pano = erp.cubemap_to_erp(cube, args.height)
    io.write_png(args.out, pano)
    _emit({"out": str(args.out), "width": 2 * args.height, "height": args.height, "face_edge": cube.edge})
    return EXIT_OK


def cmd_project(args) -> int:
    img = _read_image(args.erp)
    fov = np.deg2rad(args.fov)
    if not 0 < fov < np.pi:
        raise CliError(EXIT_VALIDATION, f"--fov must lie in (0, 180) degrees, got {args.fov}")
    try:
        erp.as_erp(img)
    except erp.DomainError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    rot = erp.rotation_ypr(np.deg2rad(args.yaw), np.deg2rad(args.pitch), np.deg2rad(args.roll))
    view = erp.erp_to_perspective(img, fov, rot, args.width, args.height)
    io.write_png(args.out, view)
    _emit({"out": str(args.out), "width": args.width, "height": args.height, "fov_deg": args.fov})
    return EXIT_OK


def cmd_wrap(args) -> int:
    src = Path(args.erp)
    if not src.is_file():
        raise CliError(EXIT_IO, f"missing file: {src}")
    fraction = args.fraction
    if args.seed is not None:
        fraction = float(np.random.default_rng(args.seed).uniform(0.0, 1.0))
    if not 0.0 <= fraction < 1.0:
        raise CliError(EXIT_VALIDATION, f"--fraction must lie in [0, 1), got {fraction}")
    img = io.read_png(src)
    try:
        erp.check_erp_shape(img.shape[1], img.shape[0])
    except erp.DomainError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    shift = int(round(fraction * img.shape[1])) % img.shape[1]
    if shift == 0:
        shutil.copyfile(src, args.out)
    else:
        io.write_png(args.out, erp.wrap_augment(img, fraction))
    _emit({"out": str(args.out), "fraction": fraction, "shift_px": shift})
    return EXIT_OK


# --- attention ------------------------------------------------------------

CONFIG_KEYS = {"K", "S", "z_near", "z_far", "L_r", "L_z", "base", "projection_mode",
               "seed", "key_dim", "out_channels", "projections", "frame"}


def load_attention_config(path, channels: int) -> att.AttentionConfig:
    """Parse the attention config JSON; projection matrices resolve relative to its directory."""
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_IO, f"missing file: {path}")
    raw = json.loads(path.read_text())
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise CliError(EXIT_VALIDATION, f"unknown config keys: {sorted(unknown)}")
    enc = EncodingConfig(int(raw.get("L_r", 6)), int(raw.get("L_z", 6)), float(raw.get("base", 2.0)))
    mode = raw.get("projection_mode", "identity")
    if mode == "identity":
        proj = None
    elif mode == "random":
        proj = att.Projections.random(channels, enc.size, int(raw.get("key_dim", channels + enc.size)),
                                      int(raw.get("out_channels", channels)), int(raw.get("seed", 0)))
    elif mode == "file":
        files = raw.get("projections") or {}
        mats = {}
        for key in ("q", "k", "v"):
            if key not in files:
                raise CliError(EXIT_VALIDATION, f"projection_mode 'file' needs projections.{key}")
            p = path.parent / files[key]
            if not p.is_file():
                raise CliError(EXIT_IO, f"missing file: {p}")
            mats[key] = io.read_tnsr(p).astype(np.float64)
        proj = att.Projections(mats["q"], mats["k"], mats["v"])
    else:
        raise CliError(EXIT_VALIDATION, f"unknown projection_mode {mode!r}")
    return att.AttentionConfig(
        K=int(raw.get("K", 2)), S=int(raw.get("S", 10)),
        z_near=float(raw.get("z_near", 0.1)), z_far=float(raw.get("z_far", 10.0)),
        enc=enc, projections=proj, frame=raw.get("frame", "anchor"),
    )


def cmd_attend(args) -> int:
    feat_path = Path(args.features)
    if not feat_path.is_file():
        raise CliError(EXIT_IO, f"missing file: {feat_path}")
    feats = io.read_tnsr(feat_path).astype(np.float64)
    if feats.ndim != 4:
        raise CliError(EXIT_VALIDATION, f"features must be N x C x h x w; got {feats.ndim} dims {feats.shape}")
    n, c, h, w = feats.shape
    if w != 2 * h:
        raise CliError(EXIT_VALIDATION, f"feature width w={w} must equal 2 x height h={h}")
    if not Path(args.poses).is_file():
        raise CliError(EXIT_IO, f"missing file: {args.poses}")
    poses = io.read_poses(args.poses)
    if len(poses) != n:
        raise CliError(EXIT_VALIDATION, f"pose count {len(poses)} does not match N={n} feature grids")
    cfg = load_attention_config(args.config, c) if args.config else att.AttentionConfig()
    if args.workers < 1:
        raise CliError(EXIT_VALIDATION, "--workers must be at least 1")
    if cfg.K > n - 1:
        raise CliError(EXIT_VALIDATION, f"K exceeds available reference views (K={cfg.K}, N-1={n - 1})")
    reference = None
    if args.compare:
        if not Path(args.compare).is_file():
            raise CliError(EXIT_IO, f"missing file: {args.compare}")
        reference = io.read_tnsr(args.compare)
    vs = att.ViewSet(feats, poses, cfg)

    log.info("attention over %d views, grid %dx%d, K=%d S=%d", n, w, h, cfg.K, cfg.S)
    results = att.epipolar_attention_forward(vs, workers=args.workers)
    out = np.stack([r.output for r in results]).astype(np.float32)
    stats = {
        "shape": list(out.shape),
        "config": {"K": cfg.K, "S": cfg.S, "z_near": cfg.z_near, "z_far": cfg.z_far,
                   "L_r": cfg.enc.L_r, "L_z": cfg.enc.L_z, "base": cfg.enc.base, "frame": cfg.frame,
                   "projection_mode": "identity" if cfg.projections is None else "matrices"},
        "views": [att.view_stats(r) for r in results],
    }
    if reference is not None:
        if reference.shape != out.shape:
            raise CliError(EXIT_VALIDATION, f"--compare tensor shape {list(reference.shape)} != {list(out.shape)}")
        diff = float(np.max(np.abs(reference.astype(np.float64) - out.astype(np.float64))))
        stats["compare_max_abs_diff"] = diff
        stats["compare_ok"] = diff <= args.tolerance
    io.write_tnsr(args.out, out)
    if args.stats:
        Path(args.stats).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    if args.figure:
        from .plotting import attention_figure

        attention_figure(args.figure, results)
    _emit(stats)
    if reference is not None and not stats["compare_ok"]:
        print(f"output differs from {args.compare} by {stats['compare_max_abs_diff']:.3g}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# --- dataset & metrics ----------------------------------------------------

def cmd_dataset(args) -> int:
    missing = []
    for t in args.traj:
        missing += io.missing_trajectory_files(t)
    if missing:
        raise CliError(EXIT_IO, "malformed trajectory layout; missing: " + ", ".join(missing), missing=missing)
    if args.n < 1:
        raise CliError(EXIT_VALIDATION, "--n must be at least 1")
    manifests = []
    for t in args.traj:
        traj = io.read_trajectory(t)
        log.info("splitting %s (%d frames)", t, len(traj))
        m = ds.split_trajectory(traj, args.n, args.tau_pix / 255.0, args.tau_change, args.zero_depth,
                                args.supersample)
        problems = ds.audit_manifest(m, traj, args.supersample)
        entry = m.to_json()
        entry["audit_problems"] = problems
        manifests.append(entry)
    doc = {"n": args.n, "tau_change": args.tau_change, "tau_pix": args.tau_pix / 255.0,
           "zero_depth": args.zero_depth, "trajectories": manifests}
    if args.manifest:
        Path(args.manifest).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.figure:
        from .plotting import change_ratio_figure

        change_ratio_figure(args.figure, manifests)
    _emit(doc)
    return EXIT_OK


def cmd_metrics(args) -> int:
    a = _read_image(args.a)
    b = _read_image(args.b)
    if a.shape != b.shape:
        raise CliError(EXIT_VALIDATION, f"image shapes differ: {a.shape} vs {b.shape}")
    _emit({"psnr": metrics.psnr(a, b), "ssim": metrics.ssim(a, b)})
    return EXIT_OK


def cmd_synth(args) -> int:
    from .scenes import render_trajectory, two_room_scene

    centers = [(x, args.cam_height, 2.0) for x in args.xs]
    traj = render_trajectory(two_room_scene(args.door_halfwidth), centers, args.height, Path(args.out).name)
    io.write_trajectory(args.out, traj)
    _emit({"out": str(args.out), "frames": len(traj), "height": args.height})
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="pano-epipolar", description=__doc__, formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("epipolar", help="epipolar curve of a target pixel in a source panorama", formatter_class=fmt)
    s.add_argument("--pose-a", required=True, help="target view pose JSON (4x4 or array of 4x4)")
    s.add_argument("--pose-b", required=True, help="source view pose JSON (4x4 or array of 4x4)")
    s.add_argument("--index-a", type=int, default=0, help="matrix index within --pose-a")
    s.add_argument("--index-b", type=int, default=0, help="matrix index within --pose-b")
    s.add_argument("--pixel", required=True, type=lambda t: _pair(t, ","), help="continuous target pixel x,y")
    s.add_argument("--size", type=lambda t: _pair(t, "x", int), default=(1024, 512), help="panorama WxH")
    s.add_argument("--out", help="overlay PNG path")
    s.add_argument("--image", help="source panorama to draw the overlay on")
    s.add_argument("--oracle-depths", type=_float_list, default=[], help="comma-separated depths in meters")
    s.add_argument("--figure", help="optional matplotlib report figure (PNG)")
    s.set_defaults(func=cmd_epipolar)

    s = sub.add_parser("stitch", help="stitch six cube faces into an ERP panorama", formatter_class=fmt)
    s.add_argument("--faces", required=True, help="directory with front/back/left/right/up/down.png")
    s.add_argument("--height", type=int, default=512, help="ERP height H (width is 2H)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stitch)

    s = sub.add_parser("project", help="render a perspective view of a panorama", formatter_class=fmt)
    s.add_argument("--erp", required=True)
    s.add_argument("--fov", type=float, default=90.0, help="horizontal field of view, degrees")
    s.add_argument("--yaw", type=float, default=0.0, help="degrees, positive toward +x")
    s.add_argument("--pitch", type=float, default=0.0, help="degrees, positive up")
    s.add_argument("--roll", type=float, default=0.0, help="degrees about the view axis")
    s.add_argument("--width", type=int, default=512)
    s.add_argument("--height", type=int, default=512)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("wrap", help="left-right wrap augmentation (cyclic column shift)", formatter_class=fmt)
    s.add_argument("--erp", required=True)
    s.add_argument("--fraction", type=float, default=0.0, help="share of columns moved from right to left")
    s.add_argument("--seed", type=int, default=None, help="draw the fraction uniformly from [0, 1) instead")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_wrap)

    s = sub.add_parser("attend", help="spherical epipolar attention forward pass", formatter_class=fmt)
    s.add_argument("--features", required=True, help="TNSR tensor N x C x h x w (w = 2h)")
    s.add_argument("--poses", required=True, help="JSON array of N camera-to-world 4x4 matrices")
    s.add_argument("--config", help="JSON {K, S, z_near, z_far, L_r, L_z, base, projection_mode}; "
                                    "defaults K=2 S=10 z_near=0.1 z_far=10 L_r=6 L_z=6 base=2 identity")
    s.add_argument("--out", required=True, help="output TNSR N x C_out x h x w")
    s.add_argument("--stats", help="stats JSON path")
    s.add_argument("--workers", type=int, default=1, help="threads; results do not depend on this")
    s.add_argument("--compare", help="TNSR to compare the output against")
    s.add_argument("--tolerance", type=float, default=1e-5, help="max abs difference accepted by --compare")
    s.add_argument("--figure", help="optional matplotlib report figure (PNG)")
    s.set_defaults(func=cmd_attend)

    s = sub.add_parser("dataset", help="zero-depth filtering and two-stage trajectory split", formatter_class=fmt)
    s.add_argument("--traj", required=True, action="append", help="trajectory directory (repeatable)")
    s.add_argument("--n", type=int, default=ds.DEFAULT_N, help="frames per group")
    s.add_argument("--tau-change", type=float, default=ds.DEFAULT_TAU_CHANGE, help="changed-pixel fraction")
    s.add_argument("--tau-pix", type=float, default=10.0, help="per-channel difference, 8-bit levels")
    s.add_argument("--zero-depth", type=float, default=ds.DEFAULT_ZERO_DEPTH, help="max zero-depth fraction")
    s.add_argument("--supersample", type=int, default=ds.DEFAULT_SUPERSAMPLE, help="splat samples per pixel axis")
    s.add_argument("--manifest", help="manifest JSON output path")
    s.add_argument("--figure", help="optional matplotlib report figure (PNG)")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("metrics", help="PSNR / SSIM between two images", formatter_class=fmt)
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("synth", help="render a synthetic two-room trajectory", formatter_class=fmt)
    s.add_argument("--out", required=True)
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--xs", type=_float_list, default=[1.0, 1.5, 2.0, 2.5, 3.0, 5.0, 5.5, 6.0, 6.5, 7.0],
                   help="camera x positions (m); the doorway is at x = 4")
    s.add_argument("--cam-height", type=float, default=1.5)
    s.add_argument("--door-halfwidth", type=float, default=0.4)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit({"error": str(exc), "code": exc.code, **exc.details})
        return exc.code
    except io.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit({"error": str(exc), "code": EXIT_VALIDATION})
        return EXIT_VALIDATION
    except (erp.DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit({"error": str(exc), "code": EXIT_VALIDATION})
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit({"error": str(exc), "code": EXIT_IO})
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
