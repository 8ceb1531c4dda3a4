"""Dataset-construction rules for multi-view panorama trajectories.

Frames with too many zero-depth pixels are rejected; consecutive frames are
compared by forward-warping the later frame into the earlier frame's
viewpoint, and a pair counts as "new content" when more than ``tau_change``
of the pixels differ. Trajectories are then split into near-static groups
(stage 1) and content-changing groups (stage 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .erp import as_erp, check_erp_shape, dir_to_pixel
from .pose import Pose
from .rays import ray_for_pixel

DEFAULT_N = 4
DEFAULT_TAU_PIX = 10.0 / 255.0
DEFAULT_TAU_CHANGE = 0.40
DEFAULT_ZERO_DEPTH = 0.05
DEFAULT_SUPERSAMPLE = 2


@dataclass
class Frame:
    color: np.ndarray  # (H, W, C) in [0, 1]
    depth: np.ndarray  # (H, W) spherical depth in meters, 0 = invalid
    pose: Pose
    caption: Optional[str] = None

    def __post_init__(self):
        self.color = as_erp(self.color)
        depth = np.asarray(self.depth, dtype=np.float64)
        if depth.ndim == 3 and depth.shape[2] == 1:
            depth = depth[:, :, 0]
        if depth.shape != self.color.shape[:2]:
            raise ValueError(f"depth shape {depth.shape} does not match color {self.color.shape[:2]}")
        if np.any(depth < 0) or not np.all(np.isfinite(depth)):
            raise ValueError("depth must be finite and non-negative")
        self.depth = depth


@dataclass
class Trajectory:
    frames: List[Frame]
    scene_id: str = ""

    def __post_init__(self):
        if not self.frames:
            raise ValueError("trajectory needs at least one frame")
        shapes = {f.color.shape[:2] for f in self.frames}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent frame resolutions: {sorted(shapes)}")

    def __len__(self):
        return len(self.frames)


@dataclass
class WarpResult:
    color: np.ndarray  # (H, W, C)
    mask: np.ndarray  # (H, W) bool, True where some source sample landed
    depth: np.ndarray  # (H, W) winning spherical depth, 0 where uncovered


def zero_depth_ratio(depth) -> float:
    d = np.asarray(depth)
    if d.ndim == 3:
        d = d[:, :, 0]
    return float(np.count_nonzero(d == 0) / d.size)


def warp_frame(src: Frame, dst_pose: Pose, supersample: int = DEFAULT_SUPERSAMPLE) -> WarpResult:
    """Forward-splat ``src`` into ``dst_pose`` with a z-buffer.

    Each source pixel with positive depth is lifted at ``supersample**2``
    sub-pixel positions (its own depth), reprojected and written to the
    destination pixel containing it; the smallest spherical depth wins,
    ties go to the lower source index. ``supersample=1`` is a plain
    one-sample-per-pixel splat.
    """
    h, w, c = src.color.shape
    check_erp_shape(w, h)
    ss = int(supersample)
    if ss < 1:
        raise ValueError("supersample must be >= 1")
    rows, cols = np.nonzero(src.depth > 0)
    offs = (np.arange(ss) + 0.5) / ss
    ox, oy = np.meshgrid(offs, offs)
    xs = (cols[:, None] + ox.ravel()[None, :]).ravel()
    ys = (rows[:, None] + oy.ravel()[None, :]).ravel()
    src_idx = np.repeat(rows * w + cols, ss * ss)
    z = src.depth.ravel()[src_idx]
    ray = ray_for_pixel(src.pose, xs, ys, w, h)
    pts = ray.origin + z[:, None] * ray.direction
    cam = dst_pose.world_to_camera(pts)
    zs = np.linalg.norm(cam, axis=1)
    keep = zs > 0
    cam, zs, src_idx = cam[keep], zs[keep], src_idx[keep]

    out_color = np.zeros((h, w, c))
    out_depth = np.zeros((h, w))
    mask = np.zeros((h, w), dtype=bool)
    if len(zs) == 0:
        return WarpResult(out_color, mask, out_depth)
    px, py = dir_to_pixel(cam, w, h)
    tc = np.mod(np.floor(np.atleast_1d(px)).astype(np.int64), w)
    tr = np.clip(np.floor(np.atleast_1d(py)).astype(np.int64), 0, h - 1)
    target = tr * w + tc
    order = np.lexsort((src_idx, zs, target))
    target_sorted = target[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = target_sorted[1:] != target_sorted[:-1]
    win = order[first]
    flat_color = src.color.reshape(-1, c)
    out_color.reshape(-1, c)[target[win]] = flat_color[src_idx[win]]
    out_depth.ravel()[target[win]] = zs[win]
    mask.ravel()[target[win]] = True
    return WarpResult(out_color, mask, out_depth)


def changed_pixels(a: Frame, b: Frame, tau_pix: float = DEFAULT_TAU_PIX,
                   supersample: int = DEFAULT_SUPERSAMPLE) -> np.ndarray:
    """Boolean (H, W) map of a's pixels not explained by b warped into a's view."""
    if a.color.shape != b.color.shape:
        raise ValueError(f"frame shapes differ: {a.color.shape} vs {b.color.shape}")
    warped = warp_frame(b, a.pose, supersample)
    diff = np.max(np.abs(warped.color - a.color), axis=2)
    return ~warped.mask | (diff > tau_pix)


def content_change_ratio(a: Frame, b: Frame, tau_pix: float = DEFAULT_TAU_PIX,
                         supersample: int = DEFAULT_SUPERSAMPLE) -> float:
    """Fraction of a's pixels that differ from b warped into a's viewpoint.

    ``b`` is splatted with its own depth; destination pixels nobody lands on
    count as changed.
    """
    return float(np.mean(changed_pixels(a, b, tau_pix, supersample)))


@dataclass
class FrameGroup:
    frames: List[int]
    ratios: List[float]

    def to_json(self) -> dict:
        return {"frames": list(self.frames), "ratios": [float(r) for r in self.ratios]}


@dataclass
class SplitManifest:
    scene_id: str
    n: int
    tau_pix: float
    tau_change: float
    ratios: List[float]
    rejected_frames: List[int] = field(default_factory=list)
    stage1: List[FrameGroup] = field(default_factory=list)
    stage2: List[FrameGroup] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "scene": self.scene_id,
            "n": self.n,
            "tau_pix": self.tau_pix,
            "tau_change": self.tau_change,
            "ratios": [float(r) for r in self.ratios],
            "rejected_frames": list(self.rejected_frames),
            "stage1": [g.to_json() for g in self.stage1],
            "stage2": [g.to_json() for g in self.stage2],
        }


def split_from_ratios(ratios: Sequence[float], n_frames: int, N: int = DEFAULT_N,
                      tau_change: float = DEFAULT_TAU_CHANGE, rejected: Sequence[int] = ()):
    """Group selection given consecutive-pair change ratios.

    ``ratios[k]`` compares frame k with frame k+1. Stage 1 is the first N
    frames. Stage 2 takes disjoint N-frame windows, scanning left to right,
    whose every consecutive ratio exceeds ``tau_change``. Windows touching a
    rejected frame are skipped.

    Returns:
        ``(stage1, stage2)`` lists of :class:`FrameGroup`.
    """
    if len(ratios) != max(n_frames - 1, 0):
        raise ValueError(f"expected {max(n_frames - 1, 0)} ratios, got {len(ratios)}")
    if N < 1:
        raise ValueError("group size N must be >= 1")
    bad = set(rejected)
    stage1, stage2 = [], []
    if n_frames < N:
        return stage1, stage2
    first = list(range(N))
    if not bad.intersection(first):
        stage1.append(FrameGroup(first, list(ratios[:N - 1])))
    i = 0
    while i + N <= n_frames:
        window = list(range(i, i + N))
        rs = list(ratios[i:i + N - 1])
        if N > 1 and not bad.intersection(window) and all(r > tau_change for r in rs):
            stage2.append(FrameGroup(window, rs))
            i += N
        else:
            i += 1
    return stage1, stage2


def consecutive_ratios(traj: Trajectory, tau_pix: float = DEFAULT_TAU_PIX,
                       supersample: int = DEFAULT_SUPERSAMPLE) -> List[float]:
    f = traj.frames
    return [content_change_ratio(f[k], f[k + 1], tau_pix, supersample) for k in range(len(f) - 1)]


def split_trajectory(traj: Trajectory, N: int = DEFAULT_N, tau_pix: float = DEFAULT_TAU_PIX,
                     tau_change: float = DEFAULT_TAU_CHANGE, zero_depth: Optional[float] = DEFAULT_ZERO_DEPTH,
                     supersample: int = DEFAULT_SUPERSAMPLE) -> SplitManifest:
    """Build the two-stage manifest for one trajectory.

    Frames whose zero-depth fraction exceeds ``zero_depth`` are rejected
    (pass None to disable the filter).
    """
    rejected = []
    if zero_depth is not None:
        rejected = [k for k, f in enumerate(traj.frames) if zero_depth_ratio(f.depth) > zero_depth]
    ratios = consecutive_ratios(traj, tau_pix, supersample)
    s1, s2 = split_from_ratios(ratios, len(traj), N, tau_change, rejected)
    return SplitManifest(traj.scene_id, N, tau_pix, tau_change, ratios, rejected, s1, s2)


def audit_manifest(manifest: SplitManifest, traj: Trajectory, supersample: int = DEFAULT_SUPERSAMPLE) -> List[str]:
    """Re-evaluate every stage-2 group against the change rule; returns a list of problems."""
    problems = []
    seen = set()
    for g in manifest.stage2:
        if len(g.frames) != manifest.n:
            problems.append(f"group {g.frames} has {len(g.frames)} frames, expected {manifest.n}")
        if seen.intersection(g.frames):
            problems.append(f"group {g.frames} overlaps an earlier stage-2 group")
        seen.update(g.frames)
        for a, b in zip(g.frames[:-1], g.frames[1:]):
            r = content_change_ratio(traj.frames[a], traj.frames[b], manifest.tau_pix, supersample)
            if not r > manifest.tau_change:
                problems.append(f"frames {a}->{b}: ratio {r:.4f} <= {manifest.tau_change}")
    for g in manifest.stage1:
        if g.frames != list(range(manifest.n)):
            problems.append(f"stage-1 group {g.frames} is not the first {manifest.n} frames")
    for k in manifest.rejected_frames:
        if any(k in g.frames for g in manifest.stage1 + manifest.stage2):
            problems.append(f"rejected frame {k} appears in a group")
    return problems
