"""Epipolar great circles between two equirectangular views.

A target pixel in view i back-projects to a ray. Together with the
baseline it spans a plane through the source camera j's center; that plane
cuts the source unit sphere in a great circle, which appears in the source
ERP image as the curve ``y(x)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .erp import (
    DomainError,
    check_erp_shape,
    dir_to_pixel,
    pixel_to_dir,
    pixel_to_sphere,
    sphere_to_pixel,
    wrap_theta,
)
from .pose import RelativePose

EPS_BASELINE = 1e-9
EPS_COLLINEAR = 1e-9
EPS_POLAR = 1e-9
EPS_NZ = 1e-12


class Degeneracy(enum.Enum):
    REGULAR = "regular"
    PURE_ROTATION = "pure rotation / zero baseline"
    EPIPOLE = "epipole: target ray passes through the source camera center"
    POLAR_CIRCLE = "polar circle: curve is a pair of meridians"


class DegenerateError(DomainError):
    """The epipolar curve is undefined for this configuration."""

    def __init__(self, degeneracy: Degeneracy):
        super().__init__(degeneracy.value)
        self.degeneracy = degeneracy


@dataclass(frozen=True)
class EpipolarPlane:
    """Plane through the source camera center containing the target ray.

    Attributes:
        normal: unit normal in source-camera coordinates, or None when the
            plane is undefined (pure rotation, epipole).
        a1, a2: reduced coefficients of ``a1 X + a2 Y + Z = 0``; None unless
            the normal has a usable z component.
        degeneracy: configuration tag.
        p_src: the target pixel's unit-depth point in source coordinates.
        o_src: the target camera center in source coordinates.
    """

    normal: Optional[np.ndarray]
    a1: Optional[float]
    a2: Optional[float]
    degeneracy: Degeneracy
    p_src: np.ndarray
    o_src: np.ndarray

    @property
    def solvable(self) -> bool:
        return self.degeneracy in (Degeneracy.REGULAR, Degeneracy.POLAR_CIRCLE)

    def require_solvable(self) -> np.ndarray:
        if not self.solvable:
            raise DegenerateError(self.degeneracy)
        return self.normal


class VerticalLines(NamedTuple):
    """The two meridian columns of a plane containing the vertical axis."""

    columns: tuple


def plane_from_normal(normal) -> EpipolarPlane:
    """Wrap a bare plane normal (e.g. for drawing arbitrary great circles)."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    tag = Degeneracy.POLAR_CIRCLE if abs(n[1]) < EPS_POLAR else Degeneracy.REGULAR
    a1, a2 = _reduced(n)
    return EpipolarPlane(n, a1, a2, tag, np.full(3, np.nan), np.zeros(3))


def _reduced(n: np.ndarray):
    if abs(n[2]) > EPS_NZ:
        return float(n[0] / n[2]), float(n[1] / n[2])
    return None, None


def quotient_coefficients(p_src, o_src):
    """``(a1, a2)`` from the quotient formulas of the three-point plane solve.

    These divide by quantities that vanish on reachable configurations;
    prefer :func:`epipolar_plane` for anything but cross-checking.
    """
    xp, yp, zp = np.asarray(p_src, dtype=np.float64)
    xo, yo, zo = np.asarray(o_src, dtype=np.float64)
    a1 = (zo * yp - zp * yo) / (xp * yo - xo * yp)
    a2 = (zo * xp - zp * xo) / (yp * xo - yo * xp)
    return float(a1), float(a2)


def epipolar_plane(pix, rel: RelativePose, width: int, height: int) -> EpipolarPlane:
    """Epipolar plane in source coordinates for target pixel ``pix = (x, y)``."""
    check_erp_shape(width, height)
    p = pixel_to_dir(pix[0], pix[1], width, height)
    p_src = rel.apply(p)
    o_src = rel.T.copy()
    if np.linalg.norm(o_src) < EPS_BASELINE:
        return EpipolarPlane(None, None, None, Degeneracy.PURE_ROTATION, p_src, o_src)
    cross = np.cross(o_src, p_src)
    p_norm = np.linalg.norm(p_src)
    scaled = np.linalg.norm(np.cross(o_src / np.linalg.norm(o_src), p_src / p_norm)) if p_norm > 0 else 0.0
    if scaled < EPS_COLLINEAR:
        return EpipolarPlane(None, None, None, Degeneracy.EPIPOLE, p_src, o_src)
    n = cross / np.linalg.norm(cross)
    a1, a2 = _reduced(n)
    tag = Degeneracy.POLAR_CIRCLE if abs(n[1]) < EPS_POLAR else Degeneracy.REGULAR
    return EpipolarPlane(n, a1, a2, tag, p_src, o_src)


def polar_columns(plane: EpipolarPlane, width: int) -> VerticalLines:
    n = plane.require_solvable()
    theta = np.arctan2(-n[2], n[0])
    cols = []
    for t in (theta, theta + np.pi):
        x, _ = sphere_to_pixel(wrap_theta(t), 0.0, width, width // 2)
        cols.append(x)
    return VerticalLines(tuple(sorted(cols)))


def epipolar_phi(plane: EpipolarPlane, theta):
    """Elevation of the great circle at azimuth ``theta`` (regular planes)."""
    n = plane.require_solvable()
    if plane.degeneracy is Degeneracy.POLAR_CIRCLE:
        raise DegenerateError(Degeneracy.POLAR_CIRCLE)
    theta = np.asarray(theta, dtype=np.float64)
    return np.arctan(-(n[0] * np.sin(theta) + n[2] * np.cos(theta)) / n[1])


def epipolar_y(plane: EpipolarPlane, x, width: int, height: int):
    """Row of the epipolar curve at continuous column(s) ``x``.

    Returns:
        An array of rows for regular planes, or :class:`VerticalLines` for
        planes containing the vertical axis.

    Raises:
        DegenerateError: for pure-rotation and epipole configurations.
    """
    plane.require_solvable()
    if plane.degeneracy is Degeneracy.POLAR_CIRCLE:
        return polar_columns(plane, width)
    theta, _ = pixel_to_sphere(x, np.zeros_like(np.asarray(x, dtype=np.float64)), width, height)
    phi = epipolar_phi(plane, theta)
    return (0.5 - phi / np.pi) * height


def epipolar_y_closed_form(a1: float, a2: float, x, width: int, height: int):
    """Closed form ``y = H (arctan((a1 sin(2πx/W) - cos(2πx/W)) / a2) / π + 0.5)`` in the reduced coefficients.

    Agrees with :func:`epipolar_y` whenever both ``a1`` and ``a2`` exist.
    """
    x = np.asarray(x, dtype=np.float64)
    ang = 2.0 * np.pi * x / width
    return height * (np.arctan((a1 * np.sin(ang) - np.cos(ang)) / a2) / np.pi + 0.5)


def oracle_points(pix, rel: RelativePose, depths, width: int, height: int) -> np.ndarray:
    """Source-camera 3-D points of the target pixel lifted to each depth."""
    p = pixel_to_dir(pix[0], pix[1], width, height)
    z = np.asarray(depths, dtype=np.float64)
    if np.any(z <= 0):
        raise DomainError("oracle depths must be positive")
    return rel.apply(z[:, None] * p[None, :])


def epipolar_oracle(pix, rel: RelativePose, depths, width: int, height: int) -> np.ndarray:
    """Brute-force correspondences: lift, transform, reproject. Returns (M, 2) pixels.

    Depths whose point lands on the source camera center are skipped.
    """
    pts = oracle_points(pix, rel, depths, width, height)
    pts = pts[np.linalg.norm(pts, axis=1) > 0]
    if len(pts) == 0:
        return np.zeros((0, 2))
    x, y = dir_to_pixel(pts, width, height)
    return np.stack([np.atleast_1d(x), np.atleast_1d(y)], axis=1)


def curve_deviation(plane: EpipolarPlane, pixels, width: int, height: int) -> np.ndarray:
    """Angular distance (radians) from each source pixel's direction to the great circle."""
    n = plane.require_solvable()
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    d = pixel_to_dir(pixels[:, 0], pixels[:, 1], width, height)
    return np.arcsin(np.clip(np.abs(d @ n), 0.0, 1.0))


def curve_phi_residual(plane: EpipolarPlane, pixels, width: int, height: int) -> np.ndarray:
    """|phi(pixel) - phi_curve(theta(pixel))| in radians for a regular plane."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    theta, phi = pixel_to_sphere(pixels[:, 0], pixels[:, 1], width, height)
    return np.abs(phi - epipolar_phi(plane, theta))


def rasterize_epipolar(plane: EpipolarPlane, width: int, height: int, supersample: int = 8):
    """Polyline vertices and a boolean pixel mask of the epipolar curve.

    Vertices sit at pixel-center columns. The mask is built column by column
    so nothing is drawn across the 0/W seam.

    Returns:
        ``(vertices, mask)`` where ``vertices`` is (M, 2) for a regular plane
        or a list of two vertical segments for a polar circle.
    """
    check_erp_shape(width, height)
    plane.require_solvable()
    mask = np.zeros((height, width), dtype=bool)
    if plane.degeneracy is Degeneracy.POLAR_CIRCLE:
        segments = []
        for c in polar_columns(plane, width).columns:
            col = int(np.floor(c)) % width
            mask[:, col] = True
            segments.append(np.array([[c, 0.0], [c, float(height)]]))
        return segments, mask
    xs = np.arange(width) + 0.5
    vertices = np.stack([xs, epipolar_y(plane, xs, width, height)], axis=1)
    dense_x = (np.arange(width * supersample) + 0.5) / supersample
    dense_y = epipolar_y(plane, dense_x, width, height)
    cols = np.floor(dense_x).astype(int)
    rows = np.clip(np.floor(dense_y).astype(int), 0, height - 1)
    mask[rows, cols] = True
    # fill vertical runs between neighbouring samples of the same column
    for k in range(len(dense_x) - 1):
        if cols[k] == cols[k + 1] and abs(rows[k + 1] - rows[k]) > 1:
            lo, hi = sorted((rows[k], rows[k + 1]))
            mask[lo:hi + 1, cols[k]] = True
    # seam: the curve reaches x = 0 and x = W at the same row; close each edge column
    for col, x_edge in ((0, 0.0), (width - 1, float(width) - 1e-12)):
        r_edge = int(np.clip(np.floor(epipolar_y(plane, np.array([x_edge]), width, height)[0]), 0, height - 1))
        inside = rows[cols == col]
        r_near = inside[0] if col == 0 else inside[-1]
        lo, hi = sorted((r_edge, r_near))
        mask[lo:hi + 1, col] = True
    return vertices, mask


def overlay(img: np.ndarray, mask: np.ndarray, color=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Copy of ``img`` (H, W, 3) with mask pixels set to ``color``."""
    out = np.array(img, dtype=np.float64, copy=True)
    if out.ndim == 2:
        out = np.repeat(out[:, :, None], 3, axis=2)
    out[mask] = color
    return out
