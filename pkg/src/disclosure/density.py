"""Type densities on a compact support.

Every density exposes ``pdf``, ``cdf``, ``dpdf`` (derivative of the pdf) and
``d2logpdf`` (second derivative of ``log pdf``), all vectorised over numpy
arrays, plus ``breakpoints``: interior points where the pdf is not smooth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import ndtr

KINDS = ("uniform", "truncated-normal", "truncated-exponential", "piecewise-linear-table")


class Density:
    lower: float
    upper: float
    kind: str = "abstract"

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def dpdf(self, x):
        h = self.width * 1e-6
        x = np.asarray(x, dtype=float)
        lo = np.maximum(x - h, self.lower)
        hi = np.minimum(x + h, self.upper)
        return (self.pdf(hi) - self.pdf(lo)) / (hi - lo)

    def d2logpdf(self, x):
        """Second central difference of ``log pdf`` with step ``width / 400``."""
        h = self.width / 400.0
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.log(self.pdf(x + h))
            lm = np.log(self.pdf(x - h))
            l0 = np.log(self.pdf(x))
            return (lp - 2.0 * l0 + lm) / (h * h)

    @property
    def analytic_log_curvature(self) -> bool:
        return False

    def mean(self) -> float:
        from .quadrature import integrate

        return integrate(lambda t: t * self.pdf(t), self.lower, self.upper, self.breakpoints)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def pushforward(self, scale: float) -> "Density":
        """Density of ``scale * theta``."""
        if scale == 1.0:
            return self
        return AffineDensity(self, scale)

    def _inside(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.lower) & (x <= self.upper)


@dataclass(frozen=True)
class Uniform(Density):
    lower: float
    upper: float
    kind: str = field(default="uniform", init=False)

    def pdf(self, x):
        return np.where(self._inside(x), 1.0 / self.width, 0.0)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lower) / self.width, 0.0, 1.0)

    def dpdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def d2logpdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def analytic_log_curvature(self) -> bool:
        return True

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class TruncatedNormal(Density):
    lower: float
    upper: float
    mean_: float
    sd: float
    kind: str = field(default="truncated-normal", init=False)

    def __post_init__(self):
        if self.sd <= 0:
            raise ValueError("truncated-normal needs sd > 0")

    @property
    def _mass(self) -> float:
        return float(ndtr((self.upper - self.mean_) / self.sd) - ndtr((self.lower - self.mean_) / self.sd))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mean_) / self.sd
        val = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * self.sd * self._mass)
        return np.where(self._inside(x), val, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        lo = ndtr((self.lower - self.mean_) / self.sd)
        return (ndtr((x - self.mean_) / self.sd) - lo) / self._mass

    def dpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -(x - self.mean_) / self.sd**2 * self.pdf(x)

    def d2logpdf(self, x):
        return np.full_like(np.asarray(x, dtype=float), -1.0 / self.sd**2)

    @property
    def analytic_log_curvature(self) -> bool:
        return True

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean_, "sd": self.sd}


@dataclass(frozen=True)
class TruncatedExponential(Density):
    """Density proportional to ``exp(rate * theta)``; ``rate > 0`` is increasing."""

    lower: float
    upper: float
    rate: float
    kind: str = field(default="truncated-exponential", init=False)

    def __post_init__(self):
        if self.rate == 0:
            raise ValueError("truncated-exponential needs a nonzero rate (use uniform)")

    @property
    def _norm(self) -> float:
        return float(np.expm1(self.rate * self.width) / self.rate)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        val = np.exp(self.rate * (x - self.lower)) / self._norm
        return np.where(self._inside(x), val, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        return np.expm1(self.rate * (x - self.lower)) / np.expm1(self.rate * self.width)

    def dpdf(self, x):
        return self.rate * self.pdf(x)

    def d2logpdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def analytic_log_curvature(self) -> bool:
        return True

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class PiecewiseLinear(Density):
    """Linear interpolation of a table, renormalised to integrate to one."""

    lower: float
    upper: float
    knots: tuple[float, ...]
    values: tuple[float, ...]
    kind: str = field(default="piecewise-linear-table", init=False)

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.shape != v.shape or k.size < 2:
            raise ValueError("table needs matching theta/f columns with at least two rows")
        if np.any(np.diff(k) <= 0):
            raise ValueError("table theta column must be strictly increasing")
        if abs(k[0] - self.lower) > 1e-12 or abs(k[-1] - self.upper) > 1e-12:
            raise ValueError("table must span the type support exactly")
        if np.any(v < 0):
            raise ValueError("table density values must be nonnegative")
        if np.any(v[1:-1] <= 0):
            raise ValueError("table density must be positive on the interior")

    @property
    def _k(self):
        return np.asarray(self.knots, dtype=float)

    @property
    def _v(self):
        return np.asarray(self.values, dtype=float)

    @property
    def _total(self) -> float:
        k, v = self._k, self._v
        return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(k)))

    @property
    def breakpoints(self):
        return tuple(self.knots[1:-1])

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        val = np.interp(x, self._k, self._v) / self._total
        return np.where(self._inside(x), val, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        k, v = self._k, self._v / self._total
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(k))])
        i = np.clip(np.searchsorted(k, x, side="right") - 1, 0, k.size - 2)
        dx = x - k[i]
        slope = (v[i + 1] - v[i]) / (k[i + 1] - k[i])
        return np.clip(cum[i] + v[i] * dx + 0.5 * slope * dx * dx, 0.0, 1.0)

    def to_dict(self):
        return {"kind": self.kind, "theta": list(self.knots), "f": list(self.values)}


@dataclass(frozen=True)
class AffineDensity(Density):
    """Law of ``scale * theta`` when ``theta`` has density ``base``."""

    base: Density
    scale: float
    kind: str = field(default="affine", init=False)

    def __post_init__(self):
        if self.scale == 0:
            raise ValueError("scale must be nonzero")

    @property
    def lower(self) -> float:  # type: ignore[override]
        return min(self.scale * self.base.lower, self.scale * self.base.upper)

    @property
    def upper(self) -> float:  # type: ignore[override]
        return max(self.scale * self.base.lower, self.scale * self.base.upper)

    @property
    def breakpoints(self):
        return tuple(sorted(self.scale * b for b in self.base.breakpoints))

    def pdf(self, x):
        return self.base.pdf(np.asarray(x, dtype=float) / self.scale) / abs(self.scale)

    def cdf(self, x):
        c = self.base.cdf(np.asarray(x, dtype=float) / self.scale)
        return c if self.scale > 0 else 1.0 - c

    def dpdf(self, x):
        return self.base.dpdf(np.asarray(x, dtype=float) / self.scale) / (self.scale * abs(self.scale))

    def d2logpdf(self, x):
        return self.base.d2logpdf(np.asarray(x, dtype=float) / self.scale) / self.scale**2

    @property
    def analytic_log_curvature(self) -> bool:
        return self.base.analytic_log_curvature

    def to_dict(self):
        return {"kind": "affine", "scale": self.scale, "base": self.base.to_dict()}


@dataclass(frozen=True)
class PointMass(Density):
    """All mass on one type; used for single-type (degenerate) economies."""

    at: float
    kind: str = field(default="point", init=False)

    @property
    def lower(self) -> float:  # type: ignore[override]
        return self.at

    @property
    def upper(self) -> float:  # type: ignore[override]
        return self.at

    def pdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.at, 1.0, 0.0)

    def mean(self) -> float:
        return self.at

    def pushforward(self, scale: float) -> "Density":
        return PointMass(scale * self.at)

    def to_dict(self):
        return {"kind": self.kind, "at": self.at}


def density_from_dict(doc: dict[str, Any], lower: float, upper: float) -> Density:
    kind = doc.get("kind", "uniform")
    if kind == "uniform":
        return Uniform(lower, upper)
    if kind == "truncated-normal":
        return TruncatedNormal(lower, upper, float(doc["mean"]), float(doc["sd"]))
    if kind == "truncated-exponential":
        return TruncatedExponential(lower, upper, float(doc["rate"]))
    if kind == "piecewise-linear-table":
        return PiecewiseLinear(lower, upper, tuple(map(float, doc["theta"])), tuple(map(float, doc["f"])))
    raise ValueError(f"unknown density kind {kind!r}; expected one of {KINDS}")
