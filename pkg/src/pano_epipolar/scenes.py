"""Analytic synthetic scenes: ray-cast panoramas with exact depth and visibility.

Used to generate trajectories with known geometry and to compute
brute-force visibility references for the dataset rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .dataset import Frame, Trajectory
from .erp import dir_to_pixel, pixel_grid
from .pose import Pose
from .rays import ray_for_pixel


@dataclass(frozen=True)
class Quad:
    """Axis-aligned rectangle ``X[axis] = offset`` with in-plane bounds.

    ``bounds`` lists (lo, hi) for the two remaining axes in increasing axis
    order. ``color_neg``/``color_pos`` are seen from the side whose
    coordinate along ``axis`` is below/above ``offset``.
    """

    axis: int
    offset: float
    bounds: tuple
    color_neg: tuple
    color_pos: tuple


@dataclass
class BoxScene:
    quads: List[Quad]
    texture_amplitude: float = 0.04
    texture_period: float = 2.0

    def cast(self, origins, dirs):
        """First hit of each ray.

        Returns:
            ``(t, color)`` with ``t = inf`` and black where nothing is hit.
        """
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        origins = np.broadcast_to(origins, dirs.shape)
        best = np.full(len(dirs), np.inf)
        color = np.zeros((len(dirs), 3))
        for q in self.quads:
            other = [a for a in range(3) if a != q.axis]
            dn = dirs[:, q.axis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (q.offset - origins[:, q.axis]) / dn
            hit = origins + t[:, None] * dirs
            ok = (dn != 0) & (t > 1e-9) & (t < best)
            for a, (lo, hi) in zip(other, q.bounds):
                ok &= (hit[:, a] >= lo) & (hit[:, a] <= hi)
            if not np.any(ok):
                continue
            best[ok] = t[ok]
            side_pos = origins[ok, q.axis] > q.offset
            base = np.where(side_pos[:, None], np.array(q.color_pos), np.array(q.color_neg))
            p = hit[ok][:, other]
            k = 2 * np.pi / self.texture_period
            tex = self.texture_amplitude * np.sin(k * p[:, 0]) * np.cos(k * p[:, 1])
            color[ok] = np.clip(base + tex[:, None], 0.0, 1.0)
        return best, color

    def render(self, pose: Pose, height: int) -> Frame:
        width = 2 * height
        xs, ys = pixel_grid(width, height)
        ray = ray_for_pixel(pose, xs.ravel(), ys.ravel(), width, height)
        t, color = self.cast(ray.origin, ray.direction)
        depth = np.where(np.isfinite(t), t, 0.0)
        return Frame(color.reshape(height, width, 3), depth.reshape(height, width), pose)

    def visible_from(self, points, colors, center) -> np.ndarray:
        """True where ``center`` sees each point unobstructed and from the same side.

        The side test compares the color the ray from ``center`` returns with
        the point's known color; both come from the same closed-form shading.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        vec = points - np.asarray(center, dtype=np.float64)
        dist = np.linalg.norm(vec, axis=1)
        dirs = vec / np.where(dist > 0, dist, 1.0)[:, None]
        t, col = self.cast(np.broadcast_to(center, points.shape), dirs)
        reached = t >= dist * (1 - 1e-7) - 1e-9
        same = np.all(np.abs(col - np.asarray(colors).reshape(-1, 3)) < 1e-6, axis=1)
        return reached & same


def two_room_scene(door_halfwidth: float = 0.5, door_height: float = 2.1) -> BoxScene:
    """Two 4 x 4 m rooms (x in [0, 4] and [4, 8]), 2.5 m tall, joined by a doorway.

    y is up. The doorway is centered at z = 2 in the dividing wall x = 4.
    Every surface has its own color, different on each side of the divider.
    """
    H, L, D = 2.5, 8.0, 4.0
    z0, z1 = 2.0 - door_halfwidth, 2.0 + door_halfwidth
    room1 = dict(floor=(0.55, 0.35, 0.20), ceil=(0.90, 0.90, 0.80), back=(0.80, 0.20, 0.20),
                 south=(0.20, 0.60, 0.25), north=(0.25, 0.30, 0.75), divider=(0.85, 0.75, 0.15))
    room2 = dict(floor=(0.30, 0.30, 0.30), ceil=(0.60, 0.80, 0.95), back=(0.65, 0.20, 0.65),
                 south=(0.15, 0.70, 0.70), north=(0.95, 0.55, 0.10), divider=(0.45, 0.85, 0.45))
    quads = []
    for (x0, x1), room in (((0.0, 4.0), room1), ((4.0, 8.0), room2)):
        quads.append(Quad(1, 0.0, ((x0, x1), (0.0, D)), room["floor"], room["floor"]))
        quads.append(Quad(1, H, ((x0, x1), (0.0, D)), room["ceil"], room["ceil"]))
        quads.append(Quad(2, 0.0, ((x0, x1), (0.0, H)), room["south"], room["south"]))
        quads.append(Quad(2, D, ((x0, x1), (0.0, H)), room["north"], room["north"]))
    quads.append(Quad(0, 0.0, ((0.0, H), (0.0, D)), room1["back"], room1["back"]))
    quads.append(Quad(0, L, ((0.0, H), (0.0, D)), room2["back"], room2["back"]))
    d1, d2 = room1["divider"], room2["divider"]
    quads.append(Quad(0, 4.0, ((0.0, H), (0.0, z0)), d1, d2))
    quads.append(Quad(0, 4.0, ((0.0, H), (z1, D)), d1, d2))
    quads.append(Quad(0, 4.0, ((door_height, H), (z0, z1)), d1, d2))
    return BoxScene(quads)


def render_trajectory(scene: BoxScene, centers: Sequence, height: int, scene_id: str = "synthetic",
                      rotations: Sequence = None) -> Trajectory:
    frames = []
    for k, c in enumerate(centers):
        R = np.eye(3) if rotations is None else rotations[k]
        frames.append(scene.render(Pose(R, c), height))
    return Trajectory(frames, scene_id)


def visibility_change_ratio(scene: BoxScene, a: Frame, b: Frame) -> float:
    """Reference change ratio: fraction of a's pixels whose surface point b cannot see.

    Pixels where a sees nothing count as changed.
    """
    h, w = a.depth.shape
    xs, ys = pixel_grid(w, h)
    ray = ray_for_pixel(a.pose, xs.ravel(), ys.ravel(), w, h)
    t, col = scene.cast(ray.origin, ray.direction)
    hit = np.isfinite(t)
    pts = ray.origin[hit] + t[hit, None] * ray.direction[hit]
    seen = np.zeros(len(t), dtype=bool)
    seen[hit] = scene.visible_from(pts, col[hit], b.pose.t)
    return float(1.0 - seen.mean())


def sphere_texture(dirs) -> np.ndarray:
    """Smooth RGB pattern on the unit sphere, values in [0.2, 0.8]."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return np.stack([0.5 + 0.3 * x * z, 0.5 + 0.3 * y, 0.5 + 0.3 * (x * x - z * z)], axis=-1)


def sphere_hit(center, dirs, radius: float) -> np.ndarray:
    """Distance from an interior point to a centered sphere along unit directions."""
    c = np.asarray(center, dtype=np.float64)
    b = np.asarray(dirs) @ c
    return -b + np.sqrt(b * b - (c @ c - radius * radius))


def sphere_frame(pose: Pose, height: int, radius: float = 5.0) -> Frame:
    """View from inside a textured sphere of ``radius`` centered at the world origin."""
    width = 2 * height
    xs, ys = pixel_grid(width, height)
    ray = ray_for_pixel(pose, xs, ys, width, height)
    t = sphere_hit(pose.t, ray.direction, radius)
    pts = ray.origin + t[..., None] * ray.direction
    return Frame(sphere_texture(pts / radius), t, pose)


def sampled_visibility_change_ratio(scene: BoxScene, a: Frame, b: Frame, supersample: int = 2) -> float:
    """Resolution-aware reference change ratio for a pair of frames.

    b's sub-pixel rays are cast against the exact geometry; a hit counts for
    the pixel of a it projects into if a sees that point unobstructed and
    from the same side (ray casting, no depth maps, no z-buffer). Pixels of
    a that receive no such hit count as changed.
    """
    h, w = b.depth.shape
    offs = (np.arange(supersample) + 0.5) / supersample
    xs, ys = pixel_grid(w, h)
    sx, sy = np.broadcast_arrays(xs[..., None, None] - 0.5 + offs[None, None, None, :],
                                 ys[..., None, None] - 0.5 + offs[None, None, :, None])
    sx, sy = sx.ravel(), sy.ravel()
    ray = ray_for_pixel(b.pose, sx, sy, w, h)
    t, col = scene.cast(ray.origin, ray.direction)
    hit = np.isfinite(t)
    pts = ray.origin[hit] + t[hit, None] * ray.direction[hit]
    vis = scene.visible_from(pts, col[hit], a.pose.t)
    pts = pts[vis]
    covered = np.zeros(h * w, dtype=bool)
    if len(pts):
        px, py = dir_to_pixel(a.pose.world_to_camera(pts), w, h)
        cols = np.mod(np.floor(px).astype(int), w)
        rows = np.clip(np.floor(py).astype(int), 0, h - 1)
        covered[rows * w + cols] = True
    return float(1.0 - covered.mean())
