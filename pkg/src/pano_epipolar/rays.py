"""World-space rays for ERP pixels, depth sampling, reprojection and Plücker encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .erp import DomainError, dir_to_pixel, pixel_to_dir
from .pose import Pose

DEFAULT_Z_NEAR = 0.1
DEFAULT_Z_FAR = 10.0


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True)
class RaySamples:
    depths: np.ndarray
    points: np.ndarray


@dataclass(frozen=True)
class PluckerCoords:
    moment: np.ndarray
    direction: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.moment, self.direction], axis=-1)


@dataclass(frozen=True)
class EncodingConfig:
    """Harmonic frequency counts for the ray (``L_r``) and depth (``L_z``) encodings."""

    L_r: int = 6
    L_z: int = 6
    base: float = 2.0

    def __post_init__(self):
        if self.L_r < 1 or self.L_z < 1:
            raise DomainError("frequency counts L_r and L_z must be >= 1")

    @property
    def size(self) -> int:
        return 12 * self.L_r + 2 * self.L_z


def ray_for_pixel(pose: Pose, x, y, width: int, height: int) -> Ray:
    """Ray from the camera center through ERP pixel(s) ``(x, y)``; vectorized over pixels."""
    d_cam = pixel_to_dir(x, y, width, height)
    d = d_cam @ pose.R.T
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return Ray(np.broadcast_to(pose.t, d.shape).copy(), d)


def depth_samples(S: int, z_near: float = DEFAULT_Z_NEAR, z_far: float = DEFAULT_Z_FAR) -> np.ndarray:
    if S < 2:
        raise DomainError(f"need at least 2 samples per ray, got S={S}")
    if not 0.0 < z_near < z_far:
        raise DomainError(f"need 0 < z_near < z_far, got {z_near}, {z_far}")
    return z_near + np.arange(S) * ((z_far - z_near) / (S - 1))


def sample_ray(ray: Ray, S: int, z_near: float = DEFAULT_Z_NEAR, z_far: float = DEFAULT_Z_FAR) -> RaySamples:
    """Uniform depths from ``z_near`` to ``z_far`` inclusive.

    For batched rays (leading axes ``B``) points have shape ``B + (S, 3)``.
    """
    z = depth_samples(S, z_near, z_far)
    pts = ray.origin[..., None, :] + z[:, None] * ray.direction[..., None, :]
    return RaySamples(z, pts)


def reproject(points, pose_ref: Pose, width: int, height: int):
    """Project world points into an ERP view.

    Returns:
        ``(x, y, z_sphere)``: continuous pixel coordinates and the Euclidean
        distance to the reference camera center.

    Raises:
        DomainError: if a point coincides with the reference camera center.
    """
    c = pose_ref.world_to_camera(points)
    z = np.linalg.norm(c, axis=-1)
    if np.any(z == 0):
        raise DomainError("point coincides with the reference camera center")
    x, y = dir_to_pixel(c, width, height)
    return x, y, z


def plucker(ray: Ray) -> PluckerCoords:
    """``(o × d, d)``; unchanged by sliding the origin along the ray."""
    return PluckerCoords(np.cross(ray.origin, ray.direction), np.asarray(ray.direction, dtype=np.float64))


def harmonic(x, L: int, base: float = 2.0) -> np.ndarray:
    """Interleaved ``[sin(b^0 x), cos(b^0 x), ..., sin(b^{L-1} x), cos(b^{L-1} x)]`` per scalar.

    The trailing axis of ``x`` (or a scalar) is expanded to ``2 L`` entries per element.
    """
    if L < 1:
        raise DomainError("harmonic encoding needs L >= 1")
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    if scalar:
        x = x[None]
    freqs = float(base) ** np.arange(L)
    arg = x[..., None] * freqs
    out = np.stack([np.sin(arg), np.cos(arg)], axis=-1)
    return out.reshape(x.shape[:-1] + (x.shape[-1] * 2 * L,))


def positional_encoding(r: PluckerCoords, z, cfg: EncodingConfig = EncodingConfig()) -> np.ndarray:
    """``[harmonic(r, L_r), harmonic(z, L_z)]``; length ``12 L_r + 2 L_z``.

    ``r`` and ``z`` broadcast over leading axes, so one ray with S depths
    yields an (S, size) array.
    """
    gr = harmonic(r.vector(), cfg.L_r, cfg.base)
    gz = harmonic(np.asarray(z, dtype=np.float64)[..., None], cfg.L_z, cfg.base)
    lead = np.broadcast_shapes(gr.shape[:-1], gz.shape[:-1])
    gr = np.broadcast_to(gr, lead + gr.shape[-1:])
    gz = np.broadcast_to(gz, lead + gz.shape[-1:])
    return np.concatenate([gr, gz], axis=-1)
