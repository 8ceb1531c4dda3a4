"""Spherical multi-view geometry for equirectangular panoramas.

Modules:
    erp        -- pixel/sphere/cartesian conversions, sampling, cubemaps, wrap augmentation
    pose       -- camera-to-world poses and relative poses
    epipolar   -- epipolar planes and great-circle curves between ERP views
    rays       -- pixel rays, depth sampling, reprojection, Plücker/harmonic encoding
    attention  -- reference spherical epipolar-aware attention forward pass
    dataset    -- zero-depth filtering, forward warping, change ratios, two-stage split
    metrics    -- PSNR / SSIM
    io         -- TNSR tensors, pose JSON, PNG, trajectory directories
    scenes     -- analytic ray-cast scenes with exact depth and visibility references
    plotting   -- report figures for the command line
    cli        -- the ``pano-epipolar`` command
"""

from .erp import DomainError, cart_to_sphere, pixel_to_sphere, sphere_to_cart, sphere_to_pixel
from .pose import Pose, RelativePose, relative_pose

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Pose",
    "RelativePose",
    "cart_to_sphere",
    "pixel_to_sphere",
    "relative_pose",
    "sphere_to_cart",
    "sphere_to_pixel",
]
