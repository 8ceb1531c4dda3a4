"""Reference forward pass of spherical epipolar-aware cross-view attention.

Every view takes a turn as target. Each target pixel's ray is sampled at S
depths, the samples are reprojected into the K nearest reference views,
reference features are bilinearly read there, and each read is tagged
with the Plücker/depth positional encoding before softmax attention.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .erp import DomainError, dir_to_pixel, erp_sample, pixel_grid
from .pose import Pose
from .rays import (
    DEFAULT_Z_FAR,
    DEFAULT_Z_NEAR,
    EncodingConfig,
    PluckerCoords,
    depth_samples,
    plucker,
    positional_encoding,
    ray_for_pixel,
)

CENTER_EPS = 1e-12


@dataclass(frozen=True)
class Projections:
    """Linear maps applied to enhanced vectors: ``q = Wq x``, ``k = Wk x``, ``v = Wv x``."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray

    def __post_init__(self):
        wq, wk, wv = (np.asarray(w, dtype=np.float64) for w in (self.wq, self.wk, self.wv))
        if wq.ndim != 2 or wk.ndim != 2 or wv.ndim != 2:
            raise DomainError("projection matrices must be 2-D")
        if wq.shape != wk.shape:
            raise DomainError(f"query/key projections differ in shape: {wq.shape} vs {wk.shape}")
        if wv.shape[1] != wq.shape[1]:
            raise DomainError(f"value projection input dim {wv.shape[1]} != {wq.shape[1]}")
        object.__setattr__(self, "wq", wq)
        object.__setattr__(self, "wk", wk)
        object.__setattr__(self, "wv", wv)

    @property
    def in_dim(self) -> int:
        return self.wq.shape[1]

    @property
    def out_channels(self) -> int:
        return self.wv.shape[0]

    @classmethod
    def identity(cls, channels: int, enc_size: int) -> "Projections":
        dim = channels + enc_size
        wv = np.zeros((channels, dim))
        wv[:, :channels] = np.eye(channels)
        return cls(np.eye(dim), np.eye(dim), wv)

    @classmethod
    def random(cls, channels: int, enc_size: int, key_dim: int, out_channels: int, seed: int = 0) -> "Projections":
        rng = np.random.default_rng(seed)
        dim = channels + enc_size
        scale = 1.0 / math.sqrt(dim)
        return cls(
            rng.normal(scale=scale, size=(key_dim, dim)),
            rng.normal(scale=scale, size=(key_dim, dim)),
            rng.normal(scale=scale, size=(out_channels, dim)),
        )


@dataclass(frozen=True)
class AttentionConfig:
    """K reference views, S samples per ray in ``[z_near, z_far]`` meters.

    ``frame="anchor"`` expresses every pose relative to view 0 before any
    geometry, which makes outputs independent of the global world frame;
    ``frame="world"`` uses poses as given.
    """

    K: int = 2
    S: int = 10
    z_near: float = DEFAULT_Z_NEAR
    z_far: float = DEFAULT_Z_FAR
    enc: EncodingConfig = field(default_factory=EncodingConfig)
    projections: Optional[Projections] = None
    frame: str = "anchor"

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be at least 1")
        depth_samples(self.S, self.z_near, self.z_far)
        if self.frame not in ("anchor", "world"):
            raise DomainError(f"unknown frame {self.frame!r}")


@dataclass(frozen=True)
class ViewSet:
    """N feature grids shaped (N, C, h, w) with w = 2h, one pose per grid."""

    features: np.ndarray
    poses: tuple
    config: AttentionConfig = field(default_factory=AttentionConfig)

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 4:
            raise DomainError(f"features must be N x C x h x w, got {f.ndim} dims")
        n, c, h, w = f.shape
        if w != 2 * h:
            raise DomainError(f"feature width {w} must equal 2 x height {h}")
        if n < 2:
            raise DomainError(f"need at least 2 views, got N={n}")
        if len(self.poses) != n:
            raise DomainError(f"{len(self.poses)} poses for N={n} feature grids")
        if not np.all(np.isfinite(f)):
            raise DomainError("features contain non-finite values")
        if self.config.K > n - 1:
            raise DomainError(f"K exceeds available reference views (K={self.config.K}, N-1={n - 1})")
        proj = self.config.projections
        if proj is not None and proj.in_dim != c + self.config.enc.size:
            raise DomainError(
                f"projection input dim {proj.in_dim} != channels {c} + encoding {self.config.enc.size}"
            )
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "poses", tuple(self.poses))

    @property
    def shape(self):
        return self.features.shape

    def grid(self, i: int) -> np.ndarray:
        """View i as an (h, w, C) raster."""
        return np.moveaxis(self.features[i], 0, -1)

    def projections(self) -> Projections:
        if self.config.projections is not None:
            return self.config.projections
        return Projections.identity(self.shape[1], self.config.enc.size)

    def working_poses(self) -> list:
        if self.config.frame == "world":
            return list(self.poses)
        anchor = self.poses[0].inverse()
        return [anchor.compose(p) for p in self.poses]


def select_reference_views(target: int, poses: Sequence[Pose], K: int) -> list:
    """The K other views with the closest camera centers, returned in ascending index order."""
    n = len(poses)
    if K > n - 1:
        raise DomainError(f"K exceeds available reference views (K={K}, N-1={n - 1})")
    centers = np.array([p.t for p in poses])
    dist = np.linalg.norm(centers - centers[target], axis=1)
    others = [i for i in range(n) if i != target]
    others.sort(key=lambda i: (dist[i], i))
    return sorted(others[:K])


@dataclass
class GatheredKV:
    """Per-target-pixel inputs to attention; P = h * w pixels in row-major order.

    Attributes:
        query_features: (P, C) target features.
        features: (P, K, S, C) reference features at the reprojected samples.
        encoding: (P, S, E) positional encoding of each sample.
        valid: (P, K, S) False where a sample hits a reference camera center.
        pixels: (P, K, S, 2) continuous reference-view pixel coordinates.
        depths: (S,) sample depths along the target rays.
    """

    query_features: np.ndarray
    features: np.ndarray
    encoding: np.ndarray
    valid: np.ndarray
    pixels: np.ndarray
    depths: np.ndarray

    def keys(self) -> np.ndarray:
        """Enhanced key/value vectors (P, K, S, C + E)."""
        P, K, S, _ = self.features.shape
        enc = np.broadcast_to(self.encoding[:, None], (P, K, S, self.encoding.shape[-1]))
        return np.concatenate([self.features, enc], axis=-1)

    def queries(self) -> np.ndarray:
        """Enhanced queries (P, S, C + E): the target feature paired with each sample's encoding."""
        P, S, E = self.encoding.shape
        qf = np.broadcast_to(self.query_features[:, None], (P, S, self.query_features.shape[-1]))
        return np.concatenate([qf, self.encoding], axis=-1)


def gather_kv(target: int, refs: Sequence[int], viewset: ViewSet, rows: Optional[slice] = None) -> GatheredKV:
    """Reproject every target pixel's ray samples into each reference view and read features.

    ``rows`` optionally restricts the target pixels to a slice of the
    row-major pixel index.
    """
    cfg = viewset.config
    n, c, h, w = viewset.shape
    poses = viewset.working_poses()
    xs, ys = pixel_grid(w, h)
    xs, ys = xs.ravel(), ys.ravel()
    if rows is not None:
        xs, ys = xs[rows], ys[rows]
    ray = ray_for_pixel(poses[target], xs, ys, w, h)
    z = depth_samples(cfg.S, cfg.z_near, cfg.z_far)
    pts = ray.origin[:, None, :] + z[None, :, None] * ray.direction[:, None, :]
    enc = positional_encoding(
        PluckerCoords(plucker(ray).moment[:, None, :], ray.direction[:, None, :]), z[None, :], cfg.enc
    )
    P = len(xs)
    feats = np.zeros((P, len(refs), cfg.S, c))
    valid = np.ones((P, len(refs), cfg.S), dtype=bool)
    pix = np.zeros((P, len(refs), cfg.S, 2))
    for k, r in enumerate(refs):
        cam = poses[r].world_to_camera(pts)
        ok = np.linalg.norm(cam, axis=-1) > CENTER_EPS
        cam = np.where(ok[..., None], cam, np.array([0.0, 0.0, 1.0]))
        px, py = dir_to_pixel(cam, w, h)
        vals = erp_sample(viewset.grid(r), px, py)
        feats[:, k] = np.where(ok[..., None], vals, 0.0)
        valid[:, k] = ok
        pix[:, k, :, 0] = px
        pix[:, k, :, 1] = py
    query = viewset.grid(target).reshape(-1, c)
    if rows is not None:
        query = query[rows]
    return GatheredKV(query, feats, enc, valid, pix, z)


def softmax(logits: np.ndarray, mask: Optional[np.ndarray] = None, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; masked-out entries get weight 0 (all-masked rows give zeros)."""
    logits = np.asarray(logits, dtype=np.float64)
    if mask is not None:
        logits = np.where(mask, logits, -np.inf)
    top = np.max(logits, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.exp(logits - top)
    total = np.sum(e, axis=axis, keepdims=True)
    return np.divide(e, total, out=np.zeros_like(e), where=total > 0)


def attention(q, keys, values, mask=None):
    """``softmax(q · k / sqrt(d)) v`` over the leading key axis.

    Args:
        q: (d,) shared query, or (M, d) with one query row per key.
        keys: (M, d).
        values: (M, c).
        mask: optional (M,) booleans; False keys are excluded.

    Returns:
        ``(output, weights)`` with shapes (c,) and (M,).
    """
    q = np.asarray(q, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    d = keys.shape[-1]
    logits = np.sum(q * keys, axis=-1) / math.sqrt(d)
    weights = softmax(logits, mask)
    return np.sum(weights[:, None] * values, axis=0), weights


@dataclass
class ViewResult:
    output: np.ndarray  # (C_out, h, w)
    weights: np.ndarray  # (P, K, S)
    valid: np.ndarray  # (P, K, S)
    refs: list


def _attend_chunk(target, refs, viewset, proj, rows):
    g = gather_kv(target, refs, viewset, rows)
    keys = g.keys()
    queries = g.queries()
    # einsum (no BLAS) keeps per-element reduction order independent of chunking
    kq = np.einsum("pksd,ed->pkse", keys, proj.wk)
    qq = np.einsum("psd,ed->pse", queries, proj.wq)
    vv = np.einsum("pksd,ed->pkse", keys, proj.wv)
    logits = np.sum(qq[:, None] * kq, axis=-1) / math.sqrt(proj.wq.shape[0])
    P = logits.shape[0]
    flat_w = softmax(logits.reshape(P, -1), g.valid.reshape(P, -1))
    out = np.sum(flat_w[..., None] * vv.reshape(P, -1, vv.shape[-1]), axis=1)
    return out, flat_w.reshape(g.valid.shape), g.valid


def attend_view(target: int, viewset: ViewSet, refs: Optional[Sequence[int]] = None,
                workers: int = 1, chunk: int = 512) -> ViewResult:
    """Attention output for one target view; ``refs`` defaults to the K nearest views."""
    n, c, h, w = viewset.shape
    if refs is None:
        refs = select_reference_views(target, viewset.working_poses(), viewset.config.K)
    proj = viewset.projections()
    P = h * w
    slices = [slice(s, min(s + chunk, P)) for s in range(0, P, chunk)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: _attend_chunk(target, refs, viewset, proj, s), slices))
    else:
        parts = [_attend_chunk(target, refs, viewset, proj, s) for s in slices]
    out = np.concatenate([p[0] for p in parts])
    weights = np.concatenate([p[1] for p in parts])
    valid = np.concatenate([p[2] for p in parts])
    grid = out.reshape(h, w, -1).transpose(2, 0, 1)
    return ViewResult(grid, weights, valid, list(refs))


def epipolar_attention_forward(viewset: ViewSet, workers: int = 1) -> list:
    """Run every view as target; returns one :class:`ViewResult` per view."""
    return [attend_view(t, viewset, workers=workers) for t in range(viewset.shape[0])]


def view_stats(result: ViewResult) -> dict:
    w = result.weights.reshape(result.weights.shape[0], -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.sum(np.where(w > 0, w * np.log(w), 0.0), axis=1)
    return {
        "refs": [int(r) for r in result.refs],
        "weight_entropy_mean": float(np.mean(ent)),
        "weight_entropy_min": float(np.min(ent)),
        "weight_entropy_max": float(np.max(ent)),
        "weight_min": float(np.min(w)),
        "weight_max": float(np.max(w)),
        "weight_sum_max_error": float(np.max(np.abs(w.sum(axis=1) - 1.0))),
        "valid_samples": int(result.valid.sum()),
        "invalid_samples": int((~result.valid).sum()),
        "output_min": float(np.min(result.output)),
        "output_max": float(np.max(result.output)),
    }
