"""Equirectangular (ERP) projection geometry.

Conventions used throughout the package:

  - Integer pixel ``(i, j)`` (column, row) has continuous coordinates
    ``(i + 0.5, j + 0.5)``; all formulas act on continuous coordinates.
  - ``theta`` is azimuth in ``(-pi, pi]``, 0 = forward (+z), +pi/2 = right (+x).
  - ``phi`` is elevation in ``[-pi/2, pi/2]``, positive = up (+y). Row 0 is
    the north pole.
  - Camera frame: x right, y up, z forward.
  - Images are numpy arrays shaped ``(H, W)`` or ``(H, W, C)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class DomainError(ValueError):
    """Raised when an input lies outside an operation's domain."""


def check_erp_shape(width: int, height: int) -> None:
    if width != 2 * height:
        raise DomainError(f"ERP requires W = 2H, got W={width}, H={height}")


def as_erp(img: np.ndarray) -> np.ndarray:
    """Validate an ERP raster and return it as a 3-D float array (H, W, C)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DomainError(f"ERP image must be 2-D or 3-D, got shape {arr.shape}")
    check_erp_shape(arr.shape[1], arr.shape[0])
    return arr


def wrap_theta(theta):
    """Map angles into (-pi, pi]."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.pi - np.mod(np.pi - theta, TWO_PI)
    return out if out.ndim else float(out)


def pixel_to_sphere(x, y, width: int, height: int):
    """Continuous pixel coordinates to spherical angles ``(theta, phi)``."""
    check_erp_shape(width, height)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    theta = wrap_theta((0.5 - x / width) * TWO_PI)
    phi = (0.5 - y / height) * np.pi
    return theta, (phi if phi.ndim else float(phi))


def sphere_to_pixel(theta, phi, width: int, height: int):
    """Spherical angles to continuous pixel coordinates, ``x`` wrapped into [0, W)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    x = np.mod((0.5 - theta / TWO_PI) * width, width)
    # mod can round up to exactly W for tiny negative inputs
    x = np.where(x >= width, x - width, x)
    y = (0.5 - phi / np.pi) * height
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def sphere_to_cart(theta, phi) -> np.ndarray:
    """Spherical angles to unit vectors; output has a trailing axis of size 3."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=np.float64), np.asarray(phi, dtype=np.float64))
    cp = np.cos(phi)
    return np.stack([cp * np.sin(theta), np.sin(phi), cp * np.cos(theta)], axis=-1)


def cart_to_sphere(v):
    """Nonzero 3-vectors (trailing axis) to ``(theta, phi)``.

    At the poles theta is 0 by convention.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise DomainError("cart_to_sphere requires nonzero finite vectors")
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    horiz = np.hypot(x, z)
    phi = np.arctan2(y, horiz)
    theta = np.where(horiz == 0, 0.0, np.arctan2(x, z))
    theta = np.where(theta <= -np.pi, np.pi, theta)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


def pixel_to_dir(x, y, width: int, height: int) -> np.ndarray:
    return sphere_to_cart(*pixel_to_sphere(x, y, width, height))


def dir_to_pixel(v, width: int, height: int):
    return sphere_to_pixel(*cart_to_sphere(v), width, height)


def pixel_grid(width: int, height: int):
    """Continuous coordinates of every pixel center, each shaped (H, W)."""
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    return np.meshgrid(xs, ys)


def erp_sample(img: np.ndarray, x, y) -> np.ndarray:
    """Bilinear sample with horizontal wrap and vertical clamp.

    Args:
        img: ERP raster, (H, W) or (H, W, C).
        x, y: continuous coordinates, any matching shapes.

    Returns:
        Array of shape ``x.shape + (C,)``.
    """
    arr = as_erp(img)
    h, w = arr.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fx = x - 0.5
    fy = np.clip(y - 0.5, 0.0, h - 1.0)
    x0 = np.floor(fx)
    y0 = np.floor(fy)
    wx = (fx - x0)[..., None]
    wy = (fy - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    c0 = np.mod(x0, w)
    c1 = np.mod(x0 + 1, w)
    r0 = y0
    r1 = np.minimum(y0 + 1, h - 1)
    top = arr[r0, c0] * (1 - wx) + arr[r0, c1] * wx
    bot = arr[r1, c0] * (1 - wx) + arr[r1, c1] * wx
    return top * (1 - wy) + bot * wy


def wrap_augment(img: np.ndarray, fraction: float) -> np.ndarray:
    """Cyclically shift an ERP so the right ``fraction`` of columns moves to the left.

    Output column ``k`` equals input column ``(k + W - s) mod W`` with
    ``s = round(fraction * W)``.
    """
    if not 0.0 <= fraction < 1.0:
        raise DomainError(f"fraction must lie in [0, 1), got {fraction}")
    arr = np.asarray(img)
    check_erp_shape(arr.shape[1], arr.shape[0])
    shift = int(round(fraction * arr.shape[1]))
    return np.roll(arr, shift, axis=1)


# --- cubemaps -------------------------------------------------------------

FACE_NAMES = ("front", "back", "left", "right", "up", "down")

# (forward, right, up) per face, camera frame x right / y up / z forward,
# viewed from inside the cube. Face image rows run along -up, columns along +right.
FACE_AXES = {
    "front": ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    "back": ((0, 0, -1), (-1, 0, 0), (0, 1, 0)),
    "left": ((-1, 0, 0), (0, 0, 1), (0, 1, 0)),
    "right": ((1, 0, 0), (0, 0, -1), (0, 1, 0)),
    "up": ((0, 1, 0), (1, 0, 0), (0, 0, -1)),
    "down": ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
}


@dataclass(frozen=True)
class CubeMap:
    """Six square 90-degree faces keyed by :data:`FACE_NAMES`."""

    faces: dict

    def __post_init__(self):
        missing = [n for n in FACE_NAMES if n not in self.faces]
        if missing:
            raise DomainError(f"cubemap is missing faces: {', '.join(missing)}")
        shapes = {np.asarray(self.faces[n]).shape for n in FACE_NAMES}
        if len(shapes) != 1:
            raise DomainError(f"cubemap faces differ in shape: {sorted(shapes)}")
        shape = shapes.pop()
        if len(shape) < 2 or shape[0] != shape[1]:
            raise DomainError(f"cubemap faces must be square, got {shape}")

    @property
    def edge(self) -> int:
        return np.asarray(self.faces["front"]).shape[0]

    def face(self, name: str) -> np.ndarray:
        f = np.asarray(self.faces[name], dtype=np.float64)
        return f if f.ndim == 3 else f[:, :, None]


def _face_basis(name: str) -> np.ndarray:
    # rows: forward, right, up
    return np.array(FACE_AXES[name], dtype=np.float64)


def _sample_clamped(img: np.ndarray, u, v) -> np.ndarray:
    """Bilinear sample of a (h, w, C) grid with edge clamping."""
    h, w = img.shape[:2]
    fu = np.clip(u - 0.5, 0.0, w - 1.0)
    fv = np.clip(v - 0.5, 0.0, h - 1.0)
    u0 = np.floor(fu).astype(np.int64)
    v0 = np.floor(fv).astype(np.int64)
    wu = (fu - u0)[..., None]
    wv = (fv - v0)[..., None]
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    top = img[v0, u0] * (1 - wu) + img[v0, u1] * wu
    bot = img[v1, u0] * (1 - wu) + img[v1, u1] * wu
    return top * (1 - wv) + bot * wv


def cubemap_to_erp(cube: CubeMap, height: int) -> np.ndarray:
    """Stitch six cube faces into an ERP panorama of size (height, 2*height, C)."""
    if height < 2:
        raise DomainError("ERP height must be at least 2")
    width = 2 * height
    xs, ys = pixel_grid(width, height)
    dirs = pixel_to_dir(xs, ys, width, height)
    names = list(FACE_NAMES)
    forwards = np.array([FACE_AXES[n][0] for n in names], dtype=np.float64)
    # ties resolve to the first face in FACE_NAMES order
    choice = np.argmax(dirs @ forwards.T, axis=-1)
    edge = cube.edge
    channels = cube.face("front").shape[2]
    out = np.zeros((height, width, channels))
    for k, name in enumerate(names):
        sel = choice == k
        if not np.any(sel):
            continue
        fwd, right, up = _face_basis(name)
        d = dirs[sel]
        depth = d @ fwd
        a = (d @ right) / depth
        b = (d @ up) / depth
        u = (a + 1.0) * 0.5 * edge
        v = (1.0 - b) * 0.5 * edge
        out[sel] = _sample_clamped(cube.face(name), u, v)
    return out


def rotation_ypr(yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """Camera rotation from yaw (toward +x), pitch (toward +y) and roll (about forward), radians.

    ``R = Ry(yaw) @ Rx(-pitch) @ Rz(roll)``; positive yaw turns the forward
    axis toward +x, positive pitch looks up.
    """
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(-pitch), np.sin(-pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return ry @ rx @ rz


def perspective_dirs(fov: float, width: int, height: int, rot=None) -> np.ndarray:
    """Unit pinhole ray directions (h, w, 3) for a horizontal field of view in radians."""
    if not 0.0 < fov < np.pi:
        raise DomainError(f"fov must lie in (0, pi), got {fov}")
    if width < 1 or height < 1:
        raise DomainError("perspective image must be at least 1x1")
    rot = np.eye(3) if rot is None else np.asarray(rot, dtype=np.float64)
    if rot.shape != (3, 3) or not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9):
        raise DomainError("rot must be an orthonormal 3x3 matrix")
    focal = 0.5 * width / np.tan(0.5 * fov)
    u = np.arange(width) + 0.5 - 0.5 * width
    v = np.arange(height) + 0.5 - 0.5 * height
    uu, vv = np.meshgrid(u, v)
    d = np.stack([uu / focal, -vv / focal, np.ones_like(uu)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d @ rot.T


def erp_to_perspective(img: np.ndarray, fov: float, rot, width: int, height: int) -> np.ndarray:
    """Render a pinhole view of an ERP panorama; returns (height, width, C)."""
    arr = as_erp(img)
    dirs = perspective_dirs(fov, width, height, rot)
    x, y = dir_to_pixel(dirs, arr.shape[1], arr.shape[0])
    return erp_sample(arr, x, y)


def erp_to_cubemap(img: np.ndarray, edge: int) -> CubeMap:
    """Resample an ERP panorama into six 90-degree faces of ``edge`` pixels."""
    arr = as_erp(img)
    faces = {}
    for name in FACE_NAMES:
        fwd, right, up = _face_basis(name)
        rot = np.stack([right, up, fwd], axis=1)
        faces[name] = erp_to_perspective(arr, np.pi / 2, rot, edge, edge)
    return CubeMap(faces)
