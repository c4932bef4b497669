"""Dense field computation over the image grid.

Coordinate grids, squared-Mahalanobis distance maps, logistic opacity,
depth-ordered composition, confidence-ellipse masks, and feature splatting.
Everything is float64 and pure; per-blob maps are independent until the
final composition fold.

Conventions fixed here and used everywhere else:
  - grid cell [h][w] (row-major) carries coordinate (x, y) = ((w+1)/W, (h+1)/H)
    for 0-based h, w -- i.e. x runs horizontally along columns;
  - a scene's blob list is its depth order: index 0 is backmost, the last
    entry is frontmost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from blobforge.blob import (
    BlobEllipse,
    BlobGaussian,
    ConfidenceLevel,
    DEFAULT_CONFIDENCE,
    DegenerateCovarianceError,
    DomainError,
    chi2_quantile_2dof,
    ellipse_to_gaussian,
)

__all__ = [
    "FIELD_KINDS",
    "CoordGrid",
    "FieldMap",
    "FeatureMap",
    "BlobEntry",
    "BlobScene",
    "make_grid",
    "mahalanobis_map",
    "mahalanobis_at",
    "opacity_map",
    "composed_opacities",
    "background_transmittance",
    "coverage_map",
    "splat",
    "scene_feature_map",
    "blob_mask",
]

FIELD_KINDS = ("distance", "opacity", "composed-opacity", "mask")


@dataclass(frozen=True)
class CoordGrid:
    """H x W map of normalized (x, y) coordinates, shape (H, W, 2)."""

    width: int
    height: int
    coords: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class FieldMap:
    """Dense H x W scalar field of a given kind.

    The literal opacity map lives in (0, 0.5] and peaks at the blob center
    (float underflow can round the far tail to exactly 0); the optional
    sharpened variant can fill (0, 1), so the type check only guards
    [0, 1]. Composed opacities stay within [0, 0.5]; masks are {0, 1};
    distances are >= 0.
    """

    width: int
    height: int
    values: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in FIELD_KINDS:
            raise DomainError(f"unknown field kind {self.kind!r}")
        if self.values.shape != (self.height, self.width):
            raise DomainError(
                f"values shape {self.values.shape} does not match (H, W)=({self.height}, {self.width})"
            )
        v = self.values
        if self.kind == "distance":
            ok = bool(np.all(v >= 0.0))
        elif self.kind == "mask":
            ok = bool(np.all((v == 0.0) | (v == 1.0)))
        elif self.kind == "composed-opacity":
            ok = bool(np.all(v >= 0.0) and np.all(v <= 0.5 + 1e-15))
        else:  # opacity
            ok = bool(np.all(v >= 0.0) and np.all(v <= 1.0))
        if not ok:
            raise DomainError(f"values out of range for kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureMap:
    """Dense H x W x d feature field."""

    width: int
    height: int
    depth: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.height, self.width, self.depth):
            raise DomainError(
                f"values shape {self.values.shape} does not match (H, W, d)="
                f"({self.height}, {self.width}, {self.depth})"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("feature values must be finite")


@dataclass(frozen=True)
class BlobEntry:
    """One scene element: geometry in both forms, a feature vector, metadata.

    The ellipse is the authoritative 5-DoF edit surface; the Gaussian is
    kept consistent with it (derived at the scene's confidence level) so
    rendering never re-converts.
    """

    id: str
    ellipse: BlobEllipse
    gaussian: BlobGaussian
    feature: tuple[float, ...]
    label: str = ""

    @classmethod
    def create(
        cls,
        id: str,
        ellipse: BlobEllipse,
        feature: "tuple[float, ...] | list[float]" = (),
        label: str = "",
        p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE,
    ) -> "BlobEntry":
        return cls(id, ellipse, ellipse_to_gaussian(ellipse, p), tuple(float(f) for f in feature), label)

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "feature": list(self.feature),
            "ellipse": self.ellipse.to_json_dict(),
            "gaussian": self.gaussian.to_json_dict(),
        }


@dataclass(frozen=True)
class BlobScene:
    """Depth-ordered blob list plus canvas dimensions.

    ``blobs[0]`` is backmost and ``blobs[-1]`` frontmost; the list order is
    the depth order used by composition. All feature vectors share one
    dimension and ids are unique.
    """

    blobs: tuple[BlobEntry, ...]
    width: int
    height: int
    confidence: ConfidenceLevel = field(default=DEFAULT_CONFIDENCE)

    def __post_init__(self) -> None:
        object.__setattr__(self, "blobs", tuple(self.blobs))
        if self.width < 1 or self.height < 1:
            raise DomainError("canvas dimensions must be positive")
        ids = [b.id for b in self.blobs]
        if len(set(ids)) != len(ids):
            raise DomainError("blob ids must be unique")
        dims = {len(b.feature) for b in self.blobs}
        if len(dims) > 1:
            raise DomainError(f"feature vectors must share one dimension, got {sorted(dims)}")

    @property
    def feature_dim(self) -> int:
        return len(self.blobs[0].feature) if self.blobs else 0

    def grid(self) -> CoordGrid:
        return make_grid(self.width, self.height)

    def index_of(self, blob_id: str) -> int:
        for i, b in enumerate(self.blobs):
            if b.id == blob_id:
                return i
        raise KeyError(blob_id)


def make_grid(width: int, height: int) -> CoordGrid:
    """Coordinate map with cell [h][w] = ((w+1)/W, (h+1)/H), 0-based h, w."""
    if width < 1 or height < 1:
        raise DomainError(f"grid dimensions must be >= 1, got {width}x{height}")
    xs = np.arange(1, width + 1, dtype=np.float64) / width
    ys = np.arange(1, height + 1, dtype=np.float64) / height
    coords = np.empty((height, width, 2), dtype=np.float64)
    coords[..., 0] = xs[None, :]
    coords[..., 1] = ys[:, None]
    coords.setflags(write=False)
    return CoordGrid(width, height, coords)


def _inverse_covariance(g: BlobGaussian) -> np.ndarray:
    sxx, sxy = g.sigma[0]
    syx, syy = g.sigma[1]
    det = sxx * syy - sxy * syx
    if not np.isfinite(det) or det <= 0.0:
        raise DegenerateCovarianceError(f"covariance is singular (det={det:.3e})")
    return np.array([[syy, -sxy], [-syx, sxx]], dtype=np.float64) / det


def mahalanobis_at(points: np.ndarray, g: BlobGaussian) -> np.ndarray:
    """Squared Mahalanobis distance of (..., 2) points to the blob center."""
    inv = _inverse_covariance(g)
    diff = np.asarray(points, dtype=np.float64) - np.asarray(g.mu)
    q = (
        diff[..., 0] * diff[..., 0] * inv[0, 0]
        + diff[..., 0] * diff[..., 1] * (inv[0, 1] + inv[1, 0])
        + diff[..., 1] * diff[..., 1] * inv[1, 1]
    )
    return np.maximum(q, 0.0)


def mahalanobis_map(grid: CoordGrid, g: BlobGaussian) -> FieldMap:
    """Per-cell squared Mahalanobis distance to the blob center."""
    return FieldMap(grid.width, grid.height, mahalanobis_at(grid.coords, g), "distance")


def opacity_map(d: FieldMap, *, sharpness: float | None = None, threshold: float = 0.0) -> FieldMap:
    """Center-peaked opacity logistic(-d), monotone decreasing in d.

    The literal form (default) peaks at exactly 0.5 where d = 0. Passing
    ``sharpness`` switches to logistic(sharpness * (threshold - d)), a
    steeper footprint with its half-level moved to ``threshold``.
    """
    if d.kind != "distance":
        raise DomainError(f"opacity_map expects a distance map, got {d.kind!r}")
    if sharpness is None:
        values = expit(-d.values)
    else:
        values = expit(sharpness * (threshold - d.values))
    return FieldMap(d.width, d.height, values, "opacity")


def _raw_opacities(scene: BlobScene, grid: CoordGrid) -> list[np.ndarray]:
    return [expit(-mahalanobis_at(grid.coords, b.gaussian)) for b in scene.blobs]


def composed_opacities(scene: BlobScene, grid: CoordGrid) -> list[FieldMap]:
    """Per-blob opacity attenuated by every blob in front of it.

    O_c[i] = O[i] * prod_{j>i} (1 - O[j]), computed back-to-front with a
    running transmittance product; the frontmost blob's composed opacity
    equals its raw opacity.
    """
    raw = _raw_opacities(scene, grid)
    out: list[np.ndarray] = [None] * len(raw)  # type: ignore[list-item]
    transmittance = np.ones((grid.height, grid.width), dtype=np.float64)
    for i in range(len(raw) - 1, -1, -1):
        out[i] = raw[i] * transmittance
        transmittance = transmittance * (1.0 - raw[i])
    return [FieldMap(grid.width, grid.height, v, "composed-opacity") for v in out]


def background_transmittance(scene: BlobScene, grid: CoordGrid) -> np.ndarray:
    """Leftover transmittance prod_j (1 - O[j]) after all blobs.

    Complements the composed opacities: their pointwise sum plus this
    array is exactly 1. Used as the background layout channel.
    """
    t = np.ones((grid.height, grid.width), dtype=np.float64)
    for o in _raw_opacities(scene, grid):
        t = t * (1.0 - o)
    return t


def coverage_map(scene: BlobScene, grid: CoordGrid) -> np.ndarray:
    """Total blob coverage 1 - prod_j (1 - O[j]) = sum of composed opacities."""
    return 1.0 - background_transmittance(scene, grid)


def splat(f: "np.ndarray | tuple[float, ...]", oc: FieldMap) -> FeatureMap:
    """Broadcast a feature vector across the grid weighted by an opacity field.

    F[h, w, :] = oc[h, w] * f; linear in both arguments.
    """
    fv = np.asarray(f, dtype=np.float64)
    if fv.ndim != 1:
        raise DomainError(f"feature must be a 1-D vector, got shape {fv.shape}")
    if not np.all(np.isfinite(oc.values)):
        raise DomainError("opacity field must be finite")
    values = oc.values[:, :, None] * fv[None, None, :]
    return FeatureMap(oc.width, oc.height, fv.shape[0], values)


def scene_feature_map(scene: BlobScene, grid: CoordGrid) -> FeatureMap:
    """Sum of per-blob splats under the scene's depth-ordered composition.

    For a single blob this equals the splat of that blob's raw opacity.
    """
    if not scene.blobs:
        raise DomainError("scene_feature_map requires a non-empty scene")
    d = scene.feature_dim
    oc = composed_opacities(scene, grid)
    total = np.zeros((grid.height, grid.width, d), dtype=np.float64)
    for entry, o in zip(scene.blobs, oc):
        total += splat(entry.feature, o).values
    return FeatureMap(grid.width, grid.height, d, total)


def blob_mask(g: BlobGaussian, grid: CoordGrid, p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE) -> FieldMap:
    """Binary interior of the p-confidence ellipse: 1 where d_M <= chi2(p)."""
    d = mahalanobis_at(grid.coords, g)
    values = (d <= chi2_quantile_2dof(p)).astype(np.float64)
    return FieldMap(grid.width, grid.height, values, "mask")
