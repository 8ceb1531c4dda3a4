"""File formats: TNSR tensors, pose JSON, 8-bit PNG and trajectory directories.

TNSR layout (little-endian)::

    b"TNSR" | u32 version = 1 | u32 ndims | ndims x u64 dims | float32 payload (row-major)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import Frame, Trajectory
from .pose import Pose

TNSR_MAGIC = b"TNSR"
TNSR_VERSION = 1


class FormatError(ValueError):
    pass


def tnsr_bytes(arr) -> bytes:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    if a.ndim == 0 or any(d == 0 for d in a.shape):
        raise FormatError(f"TNSR needs at least one dimension and positive sizes, got {a.shape}")
    head = TNSR_MAGIC + struct.pack("<II", TNSR_VERSION, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes()


def write_tnsr(path, arr) -> None:
    Path(path).write_bytes(tnsr_bytes(arr))


def parse_tnsr(buf: bytes) -> np.ndarray:
    if len(buf) < 12 or buf[:4] != TNSR_MAGIC:
        raise FormatError("not a TNSR file (bad magic)")
    version, ndims = struct.unpack_from("<II", buf, 4)
    if version != TNSR_VERSION:
        raise FormatError(f"unsupported TNSR version {version}")
    if ndims == 0:
        raise FormatError("TNSR with zero dimensions")
    off = 12 + 8 * ndims
    if len(buf) < off:
        raise FormatError("truncated TNSR header")
    dims = struct.unpack_from(f"<{ndims}Q", buf, 12)
    if any(d == 0 for d in dims):
        raise FormatError(f"TNSR dims must be positive, got {dims}")
    count = int(np.prod(dims))
    if len(buf) - off != 4 * count:
        raise FormatError(f"TNSR payload is {len(buf) - off} bytes, expected {4 * count} for dims {dims}")
    return np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(dims).astype(np.float32)


def read_tnsr(path) -> np.ndarray:
    return parse_tnsr(Path(path).read_bytes())


def poses_to_json(poses) -> str:
    return json.dumps([p.matrix().tolist() for p in poses])


def parse_poses(data) -> list:
    if not isinstance(data, list):
        raise FormatError("pose file must hold a JSON array of 4x4 matrices")
    try:
        return [Pose.from_matrix(m) for m in data]
    except ValueError as exc:
        raise FormatError(f"invalid pose matrix: {exc}") from exc


def read_poses(path) -> list:
    with open(path) as fh:
        return parse_poses(json.load(fh))


def write_poses(path, poses) -> None:
    Path(path).write_text(poses_to_json(poses))


def read_png(path) -> np.ndarray:
    """8-bit PNG to float (H, W, C) in [0, 1]."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr[:, :, None] if arr.ndim == 2 else arr


def to_uint8(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    return np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)


def write_png(path, img) -> None:
    """Deterministic 8-bit PNG (fixed compression, no metadata)."""
    Image.fromarray(to_uint8(img)).save(path, format="PNG", optimize=False, compress_level=6)


def trajectory_files(root, n_frames: int):
    root = Path(root)
    return [(root / "frames" / f"{k:04d}.png", root / "depth" / f"{k:04d}.tnsr") for k in range(n_frames)]


def missing_trajectory_files(root) -> list:
    """Paths a trajectory directory lacks; empty when the layout is complete."""
    root = Path(root)
    pose_path = root / "poses.json"
    if not pose_path.is_file():
        return [str(pose_path)]
    try:
        n = len(read_poses(pose_path))
    except (ValueError, json.JSONDecodeError) as exc:
        return [f"{pose_path} ({exc})"]
    return [str(p) for pair in trajectory_files(root, n) for p in pair if not p.is_file()]


def read_trajectory(root) -> Trajectory:
    root = Path(root)
    missing = missing_trajectory_files(root)
    if missing:
        raise FileNotFoundError("missing trajectory files: " + ", ".join(missing))
    poses = read_poses(root / "poses.json")
    captions = {}
    cap_path = root / "captions.json"
    if cap_path.is_file():
        raw = json.loads(cap_path.read_text())
        captions = dict(enumerate(raw)) if isinstance(raw, list) else {int(k): v for k, v in raw.items()}
    frames = []
    for k, (png, tnsr) in enumerate(trajectory_files(root, len(poses))):
        depth = read_tnsr(tnsr).astype(np.float64)
        frames.append(Frame(read_png(png), depth.reshape(depth.shape[0], depth.shape[1]), poses[k], captions.get(k)))
    return Trajectory(frames, root.name)


def write_trajectory(root, traj: Trajectory) -> None:
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    for k, (png, tnsr) in enumerate(trajectory_files(root, len(traj))):
        write_png(png, traj.frames[k].color)
        write_tnsr(tnsr, traj.frames[k].depth)
    write_poses(root / "poses.json", [f.pose for f in traj.frames])
    caps = [f.caption for f in traj.frames]
    if any(c is not None for c in caps):
        (root / "captions.json").write_text(json.dumps(caps))
