"""Blob parameterizations and exact ellipse <-> Gaussian interconversion.

A blob is a visual primitive carrying two equivalent 5-DoF forms: an
oriented ellipse (cx, cy, a, b, theta) in normalized [0, 1] image
coordinates, and a bivariate Gaussian (mu, Sigma). The two are linked
through a confidence level p: the p-confidence ellipse of the Gaussian
is exactly the ellipse form.

All math here is scalar (closed forms on 2x2 matrices); dense-field work
lives in :mod:`blobforge.fields`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "DomainError",
    "DegenerateCovarianceError",
    "ConfidenceLevel",
    "BlobEllipse",
    "BlobGaussian",
    "DEFAULT_CONFIDENCE",
    "chi2_quantile_2dof",
    "ellipse_to_gaussian",
    "gaussian_to_ellipse",
    "validate_gaussian",
    "GaussianVerdict",
]

# Eigenvalues closer than this (relative) are treated as an isotropic tie;
# the orientation is then canonicalized to 0.
_ISO_TIE_TOL = 1e-12

# Allowed relative asymmetry |sxy - syx| before a covariance is rejected.
_SYMMETRY_TOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateCovarianceError(ValueError):
    """A covariance matrix is singular or not positive definite."""


@dataclass(frozen=True)
class ConfidenceLevel:
    """Probability mass enclosed by a confidence ellipse, in (0, 1)."""

    p: float

    def __post_init__(self) -> None:
        if not (0.0 < self.p < 1.0) or not math.isfinite(self.p):
            raise DomainError(f"confidence level must lie in (0, 1), got {self.p}")


DEFAULT_CONFIDENCE = ConfidenceLevel(0.95)


def _as_confidence(p: "ConfidenceLevel | float") -> ConfidenceLevel:
    return p if isinstance(p, ConfidenceLevel) else ConfidenceLevel(float(p))


@dataclass(frozen=True)
class BlobEllipse:
    """Oriented ellipse in normalized coordinates.

    ``a`` and ``b`` are semi-axis lengths (> 0) and need not be ordered;
    :meth:`canonicalized` returns the a >= b form with theta attached to
    the major axis. ``theta`` is folded into [0, pi) on construction.
    """

    cx: float
    cy: float
    a: float
    b: float
    theta: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "a", "b", "theta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"ellipse field {name} must be finite, got {v}")
        if self.a <= 0 or self.b <= 0:
            raise DomainError(f"semi-axes must be positive, got a={self.a}, b={self.b}")
        object.__setattr__(self, "theta", _fold_angle(self.theta))

    def canonicalized(self) -> "BlobEllipse":
        """Return the equivalent ellipse with a >= b (a = semi-major).

        When the axes tie within tolerance the orientation is arbitrary
        and is pinned to 0.
        """
        a, b, theta = self.a, self.b, self.theta
        if math.isclose(a, b, rel_tol=_ISO_TIE_TOL, abs_tol=0.0):
            return BlobEllipse(self.cx, self.cy, a, b, 0.0)
        if a < b:
            a, b = b, a
            theta = _fold_angle(theta + math.pi / 2.0)
        return BlobEllipse(self.cx, self.cy, a, b, theta)

    def to_json_dict(self) -> dict:
        return {"cx": self.cx, "cy": self.cy, "a": self.a, "b": self.b, "theta": self.theta}

    @classmethod
    def from_json_dict(cls, d: dict) -> "BlobEllipse":
        return cls(float(d["cx"]), float(d["cy"]), float(d["a"]), float(d["b"]), float(d["theta"]))


@dataclass(frozen=True)
class BlobGaussian:
    """Bivariate Gaussian blob: mean ``mu`` and 2x2 covariance ``sigma``.

    ``sigma`` is stored row-major as ((sxx, sxy), (syx, syy)). A valid blob
    has a symmetric positive-definite covariance; construction only checks
    shape and finiteness so that :func:`validate_gaussian` can report
    asymmetry or ill-conditioning as a verdict rather than an exception.
    """

    mu: tuple[float, float]
    sigma: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self) -> None:
        mu = (float(self.mu[0]), float(self.mu[1]))
        if len(tuple(self.mu)) != 2 or not all(math.isfinite(v) for v in mu):
            raise DomainError(f"mu must be a finite 2-vector, got {self.mu}")
        rows = tuple(tuple(float(v) for v in row) for row in self.sigma)
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise DomainError("sigma must be a 2x2 matrix")
        if not all(math.isfinite(v) for r in rows for v in r):
            raise DomainError("sigma entries must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", rows)

    @property
    def sxx(self) -> float:
        return self.sigma[0][0]

    @property
    def syy(self) -> float:
        return self.sigma[1][1]

    @property
    def sxy(self) -> float:
        return self.sigma[0][1]

    def det(self) -> float:
        return self.sigma[0][0] * self.sigma[1][1] - self.sigma[0][1] * self.sigma[1][0]

    def eigenvalues(self) -> tuple[float, float]:
        """Eigenvalues of the symmetrized covariance, descending."""
        sxx, syy = self.sigma[0][0], self.sigma[1][1]
        sxy = 0.5 * (self.sigma[0][1] + self.sigma[1][0])
        half_trace = 0.5 * (sxx + syy)
        half_gap = math.hypot(0.5 * (sxx - syy), sxy)
        return half_trace + half_gap, half_trace - half_gap

    def to_json_dict(self) -> dict:
        return {"mu": list(self.mu), "sigma": [list(r) for r in self.sigma]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "BlobGaussian":
        mu = d["mu"]
        s = d["sigma"]
        return cls((float(mu[0]), float(mu[1])), ((float(s[0][0]), float(s[0][1])), (float(s[1][0]), float(s[1][1]))))


@dataclass(frozen=True)
class GaussianVerdict:
    """Outcome of :func:`validate_gaussian`; rejection is a value, not an error."""

    accepted: bool
    reason: str | None = None
    min_eigenvalue: float = field(default=math.nan)

    def __bool__(self) -> bool:
        return self.accepted


def _fold_angle(theta: float) -> float:
    """Fold an angle into [0, pi)."""
    t = math.fmod(theta, math.pi)
    if t < 0.0:
        t += math.pi
    if t >= math.pi:  # fmod rounding can land exactly on pi
        t -= math.pi
    return t


def chi2_quantile_2dof(p: "ConfidenceLevel | float") -> float:
    """Quantile of the chi-square distribution with 2 degrees of freedom.

    For 2 DoF the CDF is 1 - exp(-q/2), so the quantile has the closed
    form -2 ln(1 - p); strictly increasing in p.
    """
    level = _as_confidence(p)
    return -2.0 * math.log1p(-level.p)


def ellipse_to_gaussian(e: BlobEllipse, p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE) -> BlobGaussian:
    """Gaussian whose p-confidence ellipse is exactly ``e``.

    sigma = R(theta) diag(a^2, b^2) R(theta)^T / chi2_quantile_2dof(p),
    with R the standard CCW rotation matrix. The result is symmetric
    positive definite by construction.
    """
    q = chi2_quantile_2dof(p)
    c, s = math.cos(e.theta), math.sin(e.theta)
    a2, b2 = e.a * e.a, e.b * e.b
    sxx = (a2 * c * c + b2 * s * s) / q
    syy = (a2 * s * s + b2 * c * c) / q
    sxy = ((a2 - b2) * s * c) / q
    return BlobGaussian((e.cx, e.cy), ((sxx, sxy), (sxy, syy)))


def gaussian_to_ellipse(g: BlobGaussian, p: "ConfidenceLevel | float" = DEFAULT_CONFIDENCE) -> BlobEllipse:
    """p-confidence ellipse of ``g``, in canonical form (a >= b).

    Semi-axes are sqrt(eigenvalue * chi2_quantile_2dof(p)); theta is the
    orientation of the major-axis eigenvector, folded into [0, pi). The
    angle comes from atan2(2 sxy, sxx - syy) / 2, which stays accurate even
    for nearly isotropic covariances because the eigengap cancels in the
    ratio. Inverse of :func:`ellipse_to_gaussian` at the same p.
    """
    sxx, syy = g.sigma[0][0], g.sigma[1][1]
    sxy = 0.5 * (g.sigma[0][1] + g.sigma[1][0])
    lam_max, lam_min = g.eigenvalues()
    if lam_min <= 0.0:
        raise DegenerateCovarianceError(
            f"covariance is not positive definite (min eigenvalue {lam_min:.3e})"
        )
    q = chi2_quantile_2dof(p)
    a = math.sqrt(lam_max * q)
    b = math.sqrt(lam_min * q)
    if math.isclose(lam_max, lam_min, rel_tol=_ISO_TIE_TOL, abs_tol=0.0):
        theta = 0.0
    else:
        theta = _fold_angle(0.5 * math.atan2(2.0 * sxy, sxx - syy))
    return BlobEllipse(g.mu[0], g.mu[1], a, b, theta)


def validate_gaussian(g: BlobGaussian, min_eig: float = 1e-5) -> GaussianVerdict:
    """Check a covariance for symmetry and conditioning.

    Rejects when |sxy - syx| exceeds tolerance (relative to the matrix
    scale) or when the smallest eigenvalue falls below ``min_eig``.
    """
    asym = abs(g.sigma[0][1] - g.sigma[1][0])
    scale = max(abs(g.sigma[0][0]), abs(g.sigma[1][1]), abs(g.sigma[0][1]), abs(g.sigma[1][0]), 1.0)
    lam_max, lam_min = g.eigenvalues()
    if asym > _SYMMETRY_TOL * scale:
        return GaussianVerdict(False, "asymmetric", lam_min)
    if lam_min < min_eig:
        return GaussianVerdict(False, "ill-conditioned", lam_min)
    return GaussianVerdict(True, None, lam_min)
