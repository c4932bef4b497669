"""Self-supervised training-sample generation.

An existing (image, element mask) pair is treated as the *result* of an
edit: the element's blob is fitted from the mask (the target), a plausible
pre-edit blob is sampled by perturbing it (the source), and the sample
carries the union mask of both plus a foreground crop and a background
with the union region zeroed out. Everything is deterministic given the
seeds, down to the archived bytes.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from blobforge.blob import (
    BlobEllipse,
    BlobGaussian,
    ConfidenceLevel,
    DEFAULT_CONFIDENCE,
    DegenerateCovarianceError,
    DomainError,
    ellipse_to_gaussian,
    gaussian_to_ellipse,
    validate_gaussian,
)
from blobforge.augment import AugmentConfig, augment_foreground
from blobforge.curation import (
    CurationRules,
    FilterVerdict,
    FitError,
    REASON_FIT,
    filter_image,
    filter_mask,
    fit_ellipse_to_mask,
)
from blobforge.fieldio import field_to_bytes
from blobforge.fields import CoordGrid, FieldMap, blob_mask, make_grid

__all__ = [
    "PerturbConfig",
    "TrainingSample",
    "REASON_DEGENERATE",
    "sample_pre_edit_blob",
    "dual_mask",
    "build_training_sample",
    "write_sample_dir",
    "archive_sample",
]

REASON_DEGENERATE = "degenerate"

_MAX_SAMPLE_ATTEMPTS = 32

# fixed timestamp for archive members so identical inputs give identical bytes
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class PerturbConfig:
    """Distribution of the pre-edit perturbation, plus its seed."""

    max_center_shift: float = 0.25
    scale_range: tuple[float, float] = (0.7, 1.3)
    max_rotation: float = math.pi / 6
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise DomainError(f"scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.max_center_shift < 0 or self.max_rotation < 0:
            raise DomainError("max_center_shift and max_rotation must be >= 0")


def sample_pre_edit_blob(
    g: BlobGaussian,
    cfg: PerturbConfig,
    min_eig: float = 1e-5,
) -> BlobGaussian:
    """Random plausible pre-edit blob: perturb center, axes, orientation.

    Center shift is uniform in the disc of radius max_center_shift, axis
    scales are independent uniforms over scale_range, rotation is uniform
    in +-max_rotation. Perturbation happens in ellipse space, which makes
    the result independent of any confidence level. Draws are retried until
    the result passes validate_gaussian; 32 failures raise.
    """
    rng = np.random.default_rng(cfg.seed)
    e = gaussian_to_ellipse(g, DEFAULT_CONFIDENCE)
    lo, hi = cfg.scale_range
    for _ in range(_MAX_SAMPLE_ATTEMPTS):
        u = rng.random()
        phi = rng.uniform(0.0, 2.0 * math.pi)
        r = cfg.max_center_shift * math.sqrt(u)
        dx, dy = r * math.cos(phi), r * math.sin(phi)
        sa = float(rng.uniform(lo, hi))
        sb = float(rng.uniform(lo, hi))
        dth = float(rng.uniform(-cfg.max_rotation, cfg.max_rotation))
        if dx == 0.0 and dy == 0.0 and sa == 1.0 and sb == 1.0 and dth == 0.0:
            return g  # identity perturbation, exactly
        try:
            cand = ellipse_to_gaussian(
                BlobEllipse(e.cx + dx, e.cy + dy, e.a * sa, e.b * sb, e.theta + dth),
                DEFAULT_CONFIDENCE,
            )
        except DomainError:
            continue
        if validate_gaussian(cand, min_eig):
            return cand
    raise DegenerateCovarianceError(
        f"no valid perturbation found in {_MAX_SAMPLE_ATTEMPTS} attempts"
    )


def dual_mask(
    source: BlobGaussian,
    target: BlobGaussian,
    grid: CoordGrid,
    p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE,
) -> FieldMap:
    """Union of the source and target confidence-ellipse masks."""
    ms = blob_mask(source, grid, p)
    mt = blob_mask(target, grid, p)
    return FieldMap(grid.width, grid.height, np.maximum(ms.values, mt.values), "mask")


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """One disentangle-then-reconstruct sample.

    ``foreground_raster`` is the augmented element crop; ``background_raster``
    is the full image with the dual-mask region zeroed; ``fg_mask`` is the
    target blob's mask (a subset of ``dual_mask`` by construction).
    """

    foreground_raster: np.ndarray
    background_raster: np.ndarray
    source_blob: BlobGaussian
    target_blob: BlobGaussian
    dual_mask: FieldMap
    fg_mask: FieldMap
    augmentation_log: list
    caption: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        dm, fm = self.dual_mask, self.fg_mask
        if (dm.width, dm.height) != (fm.width, fm.height):
            raise DomainError("dual_mask and fg_mask dimensions differ")
        if not np.all(dm.values >= fm.values):
            raise DomainError("fg_mask must be contained in dual_mask")
        bg = self.background_raster
        if bg.shape[:2] != (dm.height, dm.width):
            raise DomainError("background dimensions do not match the masks")
        if not np.all(bg[dm.values == 1.0] == 0):
            raise DomainError("background must be zero on the dual-mask support")


def build_training_sample(
    image: np.ndarray,
    fg_mask: np.ndarray,
    cfg: PerturbConfig = PerturbConfig(),
    aug_cfg: AugmentConfig = AugmentConfig(),
    p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE,
    *,
    rules: "CurationRules | None" = None,
    caption: str = "",
    aug_seed: "int | None" = None,
) -> "TrainingSample | FilterVerdict":
    """Fit the target, sample the source, assemble the sample.

    Passing ``rules`` prepends the curation image/mask filters; without
    them only the fit and conditioning stages can reject. Returns a
    TrainingSample (truthy) or a FilterVerdict with the reason (falsy).
    """
    img = np.asarray(image)
    m = np.asarray(fg_mask) != 0
    if img.ndim not in (2, 3):
        raise DomainError(f"image must be 2-D or 3-D, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise DomainError(f"image must be uint8, got {img.dtype}")
    if m.shape != img.shape[:2]:
        raise DomainError(f"mask shape {m.shape} does not match image {img.shape[:2]}")
    hh, ww = m.shape

    min_eig = rules.min_cov_eig if rules is not None else 1e-5
    if rules is not None:
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
    target = ellipse_to_gaussian(e, p)
    gv = validate_gaussian(target, min_eig)
    if not gv:
        return FilterVerdict(False, gv.reason)
    try:
        source = sample_pre_edit_blob(target, cfg, min_eig)
    except DegenerateCovarianceError:
        return FilterVerdict(False, REASON_DEGENERATE)

    grid = make_grid(ww, hh)
    dm = dual_mask(source, target, grid, p)
    m1 = blob_mask(target, grid, p)

    ys, xs = np.nonzero(m)
    crop = img[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1].copy()
    crop_mask = m[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    crop[~crop_mask] = 0
    if aug_seed is None:
        aug_seed = cfg.seed + 1
    fg, log = augment_foreground(crop, aug_seed, aug_cfg)

    bg = img.copy()
    bg[dm.values == 1.0] = 0

    level = p.p if isinstance(p, ConfidenceLevel) else float(p)
    meta = {
        "seed": cfg.seed,
        "aug_seed": aug_seed,
        "confidence": level,
        "perturb": dataclasses.asdict(cfg),
        "augment": dataclasses.asdict(aug_cfg),
    }
    return TrainingSample(fg, bg, source, target, dm, m1, log, caption, meta)


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _sample_files(sample: TrainingSample) -> list[tuple[str, bytes]]:
    blobs = {
        "source": sample.source_blob.to_json_dict(),
        "target": sample.target_blob.to_json_dict(),
        "meta": sample.meta,
    }
    return [
        ("augmentation_log.json", (json.dumps(sample.augmentation_log, sort_keys=True) + "\n").encode()),
        ("bg.png", _png_bytes(sample.background_raster)),
        ("blobs.json", (json.dumps(blobs, sort_keys=True, indent=2) + "\n").encode()),
        ("caption.txt", (sample.caption + "\n").encode()),
        ("dual_mask.field", field_to_bytes(sample.dual_mask)),
        ("fg.png", _png_bytes(sample.foreground_raster)),
        ("fg_mask.field", field_to_bytes(sample.fg_mask)),
    ]


def write_sample_dir(sample: TrainingSample, out_dir: "str | Path") -> Path:
    """Materialize the on-disk layout; returns the directory path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in _sample_files(sample):
        (out / name).write_bytes(data)
    return out


def archive_sample(sample: TrainingSample) -> bytes:
    """Zip of the sample layout with frozen member metadata (byte-stable)."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, data in _sample_files(sample):
            zf.writestr(zipfile.ZipInfo(name, date_time=_ZIP_EPOCH), data)
    return buf.getvalue()
