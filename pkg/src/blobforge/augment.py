"""Seeded raster augmentation for foreground crops.

Transforms run in a fixed order -- color jitter, scale, rotate,
perspective, random erase -- each gated by its own probability, and every
applied transform lands in an ordered log, so (seed, config) fully
reproduces the output. Geometric warps use inverse mapping with
nearest-neighbor sampling and zero fill; rotation and scaling are about
the raster center. Rotation angles are measured in the (x right, y down)
index frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from blobforge.blob import DomainError

__all__ = ["AugmentConfig", "augment_foreground"]


@dataclass(frozen=True)
class AugmentConfig:
    """Per-transform probabilities and magnitudes."""

    color_jitter_prob: float = 0.5
    color_jitter_strength: float = 0.2  # channel factors in [1-s, 1+s]
    scale_prob: float = 0.5
    scale_range: tuple[float, float] = (0.8, 1.25)
    rotate_prob: float = 0.5
    max_rotation: float = math.pi / 6
    perspective_prob: float = 0.5
    perspective_strength: float = 0.08  # corner shift as a fraction of min(W, H)
    erase_prob: float = 0.5
    erase_area_range: tuple[float, float] = (0.02, 0.1)

    def __post_init__(self) -> None:
        for name in ("color_jitter_prob", "scale_prob", "rotate_prob", "perspective_prob", "erase_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.color_jitter_strength < 1.0:
            raise DomainError("color_jitter_strength must lie in [0, 1)")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise DomainError(f"scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        lo, hi = self.erase_area_range
        if not 0.0 < lo <= hi < 1.0:
            raise DomainError(f"erase_area_range must satisfy 0 < lo <= hi < 1, got ({lo}, {hi})")
        if self.max_rotation < 0 or self.perspective_strength < 0:
            raise DomainError("magnitudes must be >= 0")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        """Config under which augmentation is a no-op."""
        return cls(
            color_jitter_prob=0.0,
            scale_prob=0.0,
            rotate_prob=0.0,
            perspective_prob=0.0,
            erase_prob=0.0,
        )


def _dst_coords(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    return xx, yy


def _sample_nn(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Nearest-neighbor gather at float source coords; out-of-bounds -> 0."""
    h, w = img.shape[:2]
    ix = np.rint(sx).astype(np.int64)
    iy = np.rint(sy).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros_like(img)
    out[valid] = img[iy[valid], ix[valid]]
    return out


def _affine_inverse_warp(img: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Warp with dst->src map src = inv[:2,:2] @ (dst - c) + c."""
    h, w = img.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    xx, yy = _dst_coords(h, w)
    dx, dy = xx - cx, yy - cy
    sx = inv[0, 0] * dx + inv[0, 1] * dy + cx
    sy = inv[1, 0] * dx + inv[1, 1] * dy + cy
    return _sample_nn(img, sx, sy)


def _homography_from_points(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """3x3 homography H with src ~ H @ dst, from 4 correspondences."""
    rows = []
    rhs = []
    for (u, v), (x, y) in zip(src_pts, dst_pts):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rhs.append(u)
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.append(v)
    h8 = np.linalg.solve(np.asarray(rows, dtype=np.float64), np.asarray(rhs, dtype=np.float64))
    return np.array([[h8[0], h8[1], h8[2]], [h8[3], h8[4], h8[5]], [h8[6], h8[7], 1.0]])


def _perspective_warp(img: np.ndarray, src_corners: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    dst_corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    hm = _homography_from_points(src_corners, dst_corners)
    xx, yy = _dst_coords(h, w)
    denom = hm[2, 0] * xx + hm[2, 1] * yy + hm[2, 2]
    sx = (hm[0, 0] * xx + hm[0, 1] * yy + hm[0, 2]) / denom
    sy = (hm[1, 0] * xx + hm[1, 1] * yy + hm[1, 2]) / denom
    return _sample_nn(img, sx, sy)


def augment_foreground(
    raster: np.ndarray,
    seed: int,
    cfg: AugmentConfig = AugmentConfig(),
) -> tuple[np.ndarray, list[dict]]:
    """Apply the augmentation chain to a uint8 raster.

    Returns (augmented raster, ordered log of applied transforms). With all
    probabilities zero the input comes back bit-identical with an empty log.
    """
    img = np.asarray(raster)
    if img.size == 0:
        raise DomainError("raster must be non-empty")
    if img.ndim not in (2, 3):
        raise DomainError(f"raster must be 2-D or 3-D, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise DomainError(f"raster must be uint8, got {img.dtype}")

    rng = np.random.default_rng(seed)
    log: list[dict] = []
    h, w = img.shape[:2]
    channels = 1 if img.ndim == 2 else img.shape[2]

    if rng.random() < cfg.color_jitter_prob:
        s = cfg.color_jitter_strength
        factors = rng.uniform(1.0 - s, 1.0 + s, size=channels)
        scaled = img.astype(np.float64) * (factors if img.ndim == 2 else factors[None, None, :])
        img = np.clip(np.round(scaled), 0, 255).astype(np.uint8)
        log.append({"transform": "color_jitter", "factors": [float(f) for f in factors]})

    if rng.random() < cfg.scale_prob:
        factor = float(rng.uniform(*cfg.scale_range))
        inv = np.array([[1.0 / factor, 0.0], [0.0, 1.0 / factor]])
        img = _affine_inverse_warp(img, inv)
        log.append({"transform": "scale", "factor": factor})

    if rng.random() < cfg.rotate_prob:
        angle = float(rng.uniform(-cfg.max_rotation, cfg.max_rotation))
        c, s = math.cos(angle), math.sin(angle)
        img = _affine_inverse_warp(img, np.array([[c, s], [-s, c]]))  # R(-angle)
        log.append({"transform": "rotate", "angle": angle})

    if rng.random() < cfg.perspective_prob:
        amp = cfg.perspective_strength * min(w, h)
        offsets = rng.uniform(-amp, amp, size=(4, 2))
        base = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
        img = _perspective_warp(img, base + offsets)
        log.append({"transform": "perspective", "offsets": [[float(a), float(b)] for a, b in offsets]})

    if rng.random() < cfg.erase_prob:
        frac = float(rng.uniform(*cfg.erase_area_range))
        aspect = float(rng.uniform(0.5, 2.0))
        eh = max(1, min(h, round(math.sqrt(frac * h * w * aspect))))
        ew = max(1, min(w, round(frac * h * w / eh)))
        y0 = int(rng.integers(0, h - eh + 1))
        x0 = int(rng.integers(0, w - ew + 1))
        img = img.copy()
        img[y0 : y0 + eh, x0 : x0 + ew] = 0
        log.append({"transform": "erase", "x": x0, "y": y0, "width": ew, "height": eh})

    return img, log


def rotate_raster(raster: np.ndarray, angle: float) -> np.ndarray:
    """Rotate a uint8 raster about its center (inverse-map NN, zero fill).

    Exposed for tests and tooling; augment_foreground uses the same warp.
    """
    c, s = math.cos(angle), math.sin(angle)
    return _affine_inverse_warp(np.asarray(raster), np.array([[c, s], [-s, c]]))
