"""Dataset curation: size/area/boundary filters, moment ellipse fits, manifests.

The pipeline turns (image, binary mask) pairs into validated blob records:

    filter_image -> filter_mask -> fit_ellipse_to_mask
        -> ellipse_to_gaussian -> validate_gaussian

The first failing stage short-circuits with a reason token; rejection is a
value, not an exception. I/O problems (unreadable files, shape mismatches)
are genuine errors and stay exceptions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from blobforge.blob import (
    BlobEllipse,
    BlobGaussian,
    ConfidenceLevel,
    DEFAULT_CONFIDENCE,
    DomainError,
    ellipse_to_gaussian,
    validate_gaussian,
)

__all__ = [
    "REASON_SHORT_SIDE",
    "REASON_AREA",
    "REASON_BOUNDARY",
    "REASON_EMPTY",
    "REASON_FIT",
    "FitError",
    "CurationRules",
    "FilterVerdict",
    "BlobRecord",
    "filter_image",
    "filter_mask",
    "fit_ellipse_to_mask",
    "curate_record",
    "curate_directory",
    "load_mask_png",
    "write_manifest",
]

REASON_SHORT_SIDE = "short_side"
REASON_AREA = "area"
REASON_BOUNDARY = "boundary"
REASON_EMPTY = "empty"
REASON_FIT = "fit"
# conditioning failures reuse validate_gaussian's tokens:
# "ill-conditioned" and "asymmetric"

_STAGES = ("short_side", "area", "boundary", "fit", "conditioning")

# Eigenvalues of the pixel covariance closer than this (relative) count as
# exactly collinear input; real rasterized shapes sit far above it.
_COLLINEAR_TOL = 1e-12


class FitError(ValueError):
    """A mask does not support a non-degenerate ellipse fit."""


@dataclass(frozen=True)
class CurationRules:
    """Thresholds for the record filters."""

    min_short_side: int = 480
    area_ratio_range: tuple[float, float] = (0.01, 0.9)
    boundary_margin: int = 1
    min_cov_eig: float = 1e-5

    def __post_init__(self) -> None:
        lo, hi = self.area_ratio_range
        if not (0.0 < lo < hi < 1.0):
            raise DomainError(f"area ratio range must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")
        if self.min_short_side < 1:
            raise DomainError(f"min_short_side must be >= 1, got {self.min_short_side}")
        if self.boundary_margin < 0:
            raise DomainError(f"boundary_margin must be >= 0, got {self.boundary_margin}")
        if self.min_cov_eig <= 0:
            raise DomainError(f"min_cov_eig must be > 0, got {self.min_cov_eig}")

    def to_json_dict(self) -> dict:
        return {
            "min_short_side": self.min_short_side,
            "area_ratio_range": list(self.area_ratio_range),
            "boundary_margin": self.boundary_margin,
            "min_cov_eig": self.min_cov_eig,
        }


@dataclass(frozen=True)
class FilterVerdict:
    """Accept/reject outcome of a filter stage."""

    accepted: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.accepted


@dataclass(frozen=True, eq=False)
class BlobRecord:
    """A curated sample: refs, fitted geometry, and the decisions taken."""

    image_ref: str
    mask_ref: str
    ellipse: BlobEllipse
    gaussian: BlobGaussian
    caption: str | None = None
    provenance: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "image_ref": self.image_ref,
            "mask_ref": self.mask_ref,
            "ellipse": self.ellipse.to_json_dict(),
            "gaussian": self.gaussian.to_json_dict(),
            "caption": self.caption,
            "provenance": self.provenance,
        }


def filter_image(width: int, height: int, rules: CurationRules = CurationRules()) -> FilterVerdict:
    """Accept iff the shorter image side strictly exceeds the threshold."""
    if width < 1 or height < 1:
        raise DomainError(f"image dimensions must be positive, got {width}x{height}")
    if min(width, height) > rules.min_short_side:
        return FilterVerdict(True)
    return FilterVerdict(False, REASON_SHORT_SIDE)


def filter_mask(mask: np.ndarray, rules: CurationRules = CurationRules()) -> FilterVerdict:
    """Area-ratio (closed interval) and boundary-clearance checks."""
    m = np.asarray(mask) != 0
    if m.ndim != 2:
        raise DomainError(f"mask must be 2-D, got shape {m.shape}")
    count = int(m.sum())
    if count == 0:
        return FilterVerdict(False, REASON_EMPTY)
    ratio = count / m.size
    lo, hi = rules.area_ratio_range
    if not (lo <= ratio <= hi):
        return FilterVerdict(False, REASON_AREA)
    g = rules.boundary_margin
    if g > 0 and (m[:g].any() or m[-g:].any() or m[:, :g].any() or m[:, -g:].any()):
        return FilterVerdict(False, REASON_BOUNDARY)
    return FilterVerdict(True)


def fit_ellipse_to_mask(mask: np.ndarray) -> BlobEllipse:
    """Second-moment (equal-area) ellipse of a binary region.

    Center = centroid of set-pixel coordinates; semi-axes = 2 * sqrt of the
    coordinate-covariance eigenvalues; theta from the principal eigenvector.
    Pixel (h, w) sits at normalized ((w+1)/W, (h+1)/H), the same lattice the
    field engine samples. Raises FitError below 5 set pixels or when the
    pixel centers are exactly collinear.
    """
    m = np.asarray(mask) != 0
    if m.ndim != 2:
        raise DomainError(f"mask must be 2-D, got shape {m.shape}")
    ys, xs = np.nonzero(m)
    n = xs.size
    if n < 5:
        raise FitError(f"need at least 5 set pixels for a fit, got {n}")
    hh, ww = m.shape
    px = (xs + 1.0) / ww
    py = (ys + 1.0) / hh
    cx = float(px.mean())
    cy = float(py.mean())
    dx = px - cx
    dy = py - cy
    cxx = float(dx @ dx) / n
    cyy = float(dy @ dy) / n
    cxy = float(dx @ dy) / n
    half_tr = 0.5 * (cxx + cyy)
    half_gap = math.hypot(0.5 * (cxx - cyy), cxy)
    lam_max = half_tr + half_gap
    lam_min = half_tr - half_gap
    if lam_min <= _COLLINEAR_TOL * lam_max:
        raise FitError("set pixels are collinear")
    a = 2.0 * math.sqrt(lam_max)
    b = 2.0 * math.sqrt(lam_min)
    if math.isclose(lam_max, lam_min, rel_tol=1e-12, abs_tol=0.0):
        theta = 0.0
    else:
        theta = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)
    return BlobEllipse(cx, cy, a, b, theta)


def curate_record(
    image: np.ndarray,
    mask: np.ndarray,
    rules: CurationRules = CurationRules(),
    p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE,
    *,
    image_ref: str = "",
    mask_ref: str = "",
    caption: "str | None" = None,
) -> "BlobRecord | FilterVerdict":
    """Run the full filter chain; first failure wins.

    Returns a BlobRecord (truthy) or a FilterVerdict carrying the rejection
    reason (falsy). Mismatched image/mask shapes are an error, not a
    rejection.
    """
    img = np.asarray(image)
    m = np.asarray(mask)
    if img.ndim not in (2, 3):
        raise DomainError(f"image must be 2-D or 3-D, got shape {img.shape}")
    if img.shape[:2] != m.shape[:2]:
        raise DomainError(f"mask shape {m.shape[:2]} does not match image {img.shape[:2]}")
    hh, ww = img.shape[:2]

    v = filter_image(ww, hh, rules)
    if not v:
        return v
    v = filter_mask(m, rules)
    if not v:
        return v
    try:
        e = fit_ellipse_to_mask(m)
    except FitError:
        return FilterVerdict(False, REASON_FIT)
    g = ellipse_to_gaussian(e, p)
    gv = validate_gaussian(g, rules.min_cov_eig)
    if not gv:
        return FilterVerdict(False, gv.reason)
    level = p.p if isinstance(p, ConfidenceLevel) else float(p)
    return BlobRecord(
        image_ref,
        mask_ref,
        e,
        g,
        caption,
        {"checks": list(_STAGES), "rules": rules.to_json_dict(), "confidence": level},
    )


def load_mask_png(path: "str | Path") -> np.ndarray:
    """Grayscale PNG to boolean mask; a pixel is set when its value > 127."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_manifest(path: "str | Path", lines: "list[dict]") -> None:
    with open(path, "w") as f:
        for line in lines:
            f.write(json.dumps(line, sort_keys=True) + "\n")


def curate_directory(
    in_dir: "str | Path",
    out_path: "str | Path",
    rules: CurationRules = CurationRules(),
    p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE,
) -> dict:
    """Curate every <stem>.png / <stem>.mask.png pair under a directory.

    Writes a JSON-lines manifest: one {"type": "record", ...} line per pair
    (accepted records embed the fitted geometry) and a trailing
    {"type": "summary", ...} line with counts per rejection reason.
    Unreadable pairs become {"type": "error", ...} lines. Returns the
    summary dict.
    """
    in_dir = Path(in_dir)
    lines: list[dict] = []
    reasons: dict[str, int] = {}
    n_total = n_accepted = n_errors = 0
    for mask_path in sorted(in_dir.glob("*.mask.png")):
        image_path = mask_path.with_name(mask_path.name[: -len(".mask.png")] + ".png")
        n_total += 1
        try:
            with Image.open(image_path) as im:
                width, height = im.size
            mask = load_mask_png(mask_path)
            if mask.shape != (height, width):
                raise DomainError(f"mask shape {mask.shape} does not match image {height}x{width}")
            caption_path = image_path.with_suffix(".txt")
            caption = caption_path.read_text().strip() if caption_path.exists() else None
            # curate_record re-checks shapes; give it a dims-only stand-in
            # rather than decoding the full image
            result = curate_record(
                np.empty((height, width), dtype=np.uint8),
                mask,
                rules,
                p,
                image_ref=str(image_path),
                mask_ref=str(mask_path),
                caption=caption,
            )
        except (OSError, DomainError) as exc:
            n_errors += 1
            lines.append({"type": "error", "image_ref": str(image_path), "mask_ref": str(mask_path), "error": str(exc)})
            continue
        if isinstance(result, BlobRecord):
            n_accepted += 1
            lines.append({"type": "record", "accepted": True, "reason": None, **result.to_json_dict()})
        else:
            reasons[result.reason] = reasons.get(result.reason, 0) + 1
            lines.append(
                {
                    "type": "record",
                    "accepted": False,
                    "reason": result.reason,
                    "image_ref": str(image_path),
                    "mask_ref": str(mask_path),
                }
            )
    summary = {
        "type": "summary",
        "total": n_total,
        "accepted": n_accepted,
        "rejected": n_total - n_accepted - n_errors,
        "errors": n_errors,
        "reasons": reasons,
    }
    lines.append(summary)
    write_manifest(out_path, lines)
    return summary
