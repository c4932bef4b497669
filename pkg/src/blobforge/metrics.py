"""Evaluation metrics: mask-refit grounding error and image quality scores.

Grounding error re-fits an ellipse to a predicted mask and measures the
mean squared error against the ground-truth ellipse over the normalized
parameter vector (cx, cy, a, b, theta/pi), with the angle compared by
wraparound distance.  Fit failures are reported as missing rather than
scored.  PSNR and SSIM operate on 8-bit-range grayscale rasters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from blobforge.blob import BlobEllipse, DomainError
from blobforge.curation import FitError, fit_ellipse_to_mask, load_mask_png

__all__ = [
    "GroundingSample",
    "GroundingReport",
    "ellipse_param_errors",
    "ellipse_mse",
    "grounding_mse",
    "grounding_report",
    "psnr",
    "ssim",
    "run_bench",
]


def ellipse_param_errors(a: BlobEllipse, b: BlobEllipse) -> tuple[float, ...]:
    """Squared per-parameter errors over (cx, cy, a, b, theta/pi).

    Both ellipses are canonicalized first; the angle error is the
    wraparound distance min(|dt|, pi - |dt|) / pi, so orientations just
    under pi are close to orientations just above 0.
    """
    ca, cb = a.canonicalized(), b.canonicalized()
    dt = abs(ca.theta - cb.theta)
    dt = min(dt, math.pi - dt) / math.pi
    diffs = (ca.cx - cb.cx, ca.cy - cb.cy, ca.a - cb.a, ca.b - cb.b, dt)
    return tuple(d * d for d in diffs)


def ellipse_mse(a: BlobEllipse, b: BlobEllipse) -> float:
    errs = ellipse_param_errors(a, b)
    return sum(errs) / len(errs)


def grounding_mse(pred_mask: np.ndarray, gt: BlobEllipse) -> "float | None":
    """Refit the mask and score it against gt; None when the fit fails."""
    try:
        fitted = fit_ellipse_to_mask(pred_mask)
    except FitError:
        return None
    return ellipse_mse(fitted, gt)


@dataclass(frozen=True)
class GroundingSample:
    name: str
    gt: BlobEllipse
    fitted: "BlobEllipse | None"
    squared_errors: "tuple[float, ...] | None"
    mse: "float | None"

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "gt": self.gt.to_json_dict(),
            "fitted": None if self.fitted is None else self.fitted.to_json_dict(),
            "squared_errors": None if self.squared_errors is None else list(self.squared_errors),
            "mse": self.mse,
            "missing": self.fitted is None,
        }


@dataclass(frozen=True)
class GroundingReport:
    samples: tuple[GroundingSample, ...]
    aggregate_mse: "float | None"
    missing: int

    def to_json_dict(self) -> dict:
        return {
            "samples": [s.to_json_dict() for s in self.samples],
            "aggregate_mse": self.aggregate_mse,
            "missing": self.missing,
        }


def grounding_report(cases: "list[tuple[str, np.ndarray, BlobEllipse]]") -> GroundingReport:
    """Score (name, predicted mask, ground truth) triples; the aggregate is
    the mean over scored samples, None if every fit failed."""
    samples = []
    scored = []
    for name, mask, gt in cases:
        try:
            fitted = fit_ellipse_to_mask(mask)
        except FitError:
            samples.append(GroundingSample(name, gt, None, None, None))
            continue
        errs = ellipse_param_errors(fitted, gt)
        mse = sum(errs) / len(errs)
        scored.append(mse)
        samples.append(GroundingSample(name, gt, fitted, errs, mse))
    aggregate = sum(scored) / len(scored) if scored else None
    return GroundingReport(tuple(samples), aggregate, len(samples) - len(scored))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio against a 255 peak; +inf when identical."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise DomainError(f"shape {x.shape} does not match {y.shape}")
    if x.size == 0:
        raise DomainError("empty rasters")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_PEAK = 255.0


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _window_means(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    views = np.lib.stride_tricks.sliding_window_view(img, w.shape)
    return np.einsum("ijkl,kl->ij", views, w)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale structural similarity over an 11x11 Gaussian window
    (sigma 1.5), k1=0.01, k2=0.03, peak 255; windows fully inside the image."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise DomainError(f"shape {x.shape} does not match {y.shape}")
    if x.ndim != 2:
        raise DomainError("ssim expects 2-D grayscale rasters")
    if min(x.shape) < _SSIM_WINDOW:
        raise DomainError(f"image {x.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    w = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    mu_x = _window_means(x, w)
    mu_y = _window_means(y, w)
    s_xx = _window_means(x * x, w) - mu_x * mu_x
    s_yy = _window_means(y * y, w) - mu_y * mu_y
    s_xy = _window_means(x * y, w) - mu_x * mu_y
    c1 = (_SSIM_K1 * _SSIM_PEAK) ** 2
    c2 = (_SSIM_K2 * _SSIM_PEAK) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * s_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (s_xx + s_yy + c2)
    return float(np.mean(num / den))


def _load_gray(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=float)


def run_bench(pred_masks_dir: "str | Path", gt_path: "str | Path", images_dir: "str | Path | None" = None) -> dict:
    """Score a directory of predicted masks against a JSON map of ground
    truths, plus optional image pairs (<stem>.ref.png vs <stem>.out.png).

    Infinite PSNR (identical pair) is reported as null with an
    "identical" flag so the report stays strict JSON.
    """
    gt_raw = json.loads(Path(gt_path).read_text())
    if not isinstance(gt_raw, dict):
        raise DomainError("ground-truth file must map names to ellipse dicts")
    gts = {name: BlobEllipse.from_json_dict(d) for name, d in sorted(gt_raw.items())}

    cases = []
    masks_dir = Path(pred_masks_dir)
    for name, gt in gts.items():
        path = masks_dir / f"{name}.png"
        if not path.exists():
            continue
        cases.append((name, load_mask_png(path), gt))
    grounding = grounding_report(cases)

    report: dict = {"grounding": grounding.to_json_dict()}
    if images_dir is not None:
        pairs = []
        psnrs: list[float] = []
        ssims: list[float] = []
        for ref in sorted(Path(images_dir).glob("*.ref.png")):
            out = ref.with_name(ref.name.replace(".ref.png", ".out.png"))
            if not out.exists():
                continue
            x = _load_gray(ref)
            y = _load_gray(out)
            p = psnr(x, y)
            s = ssim(x, y)
            pairs.append(
                {
                    "name": ref.name[: -len(".ref.png")],
                    "psnr": None if math.isinf(p) else p,
                    "identical": math.isinf(p),
                    "ssim": s,
                }
            )
            if not math.isinf(p):
                psnrs.append(p)
            ssims.append(s)
        report["images"] = {
            "pairs": pairs,
            "mean_psnr": sum(psnrs) / len(psnrs) if psnrs else None,
            "mean_ssim": sum(ssims) / len(ssims) if ssims else None,
        }
    return report
