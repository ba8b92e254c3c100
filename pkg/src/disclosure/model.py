"""The economy: polynomial base profit, linear type interaction, type density.

Profit is ``pi(theta, e) = pi0(e) - theta * (a * e + b)`` on emissions
``E = [0, cap]``. All analysis runs on the canonical form obtained with
``theta' = -a * theta``, where profit reads ``pi0(e) + theta' * e`` minus a
policy-independent ``b * theta`` term that only shifts expected profit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from numpy.polynomial import polynomial as P

from .density import Density, PointMass, density_from_dict


class Poly:
    """Ascending-coefficient polynomial; a thin, fast stand-in for ``numpy.polynomial.Polynomial``."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        self.coef = np.asarray(coef, dtype=float)

    def __call__(self, x):
        return P.polyval(x, self.coef)

    def deriv(self, m: int = 1) -> "Poly":
        return Poly(P.polyder(self.coef, m))

VALIDATION_GRID = 101
MAX_DEGREE = 6


class AssumptionError(ValueError):
    """An instance violates a modelling assumption the analysis relies on."""


@dataclass(frozen=True)
class ModelInstance:
    emission_cap: float
    pi0: tuple[float, ...]
    slope_a: float
    intercept_b: float
    type_lower: float
    type_upper: float
    density: Density

    def __post_init__(self):
        if not self.emission_cap > 0:
            raise ValueError("emission_cap must be positive")
        if not self.type_lower < self.type_upper:
            raise ValueError("type support needs lower < upper")
        if len(self.pi0) == 0 or len(self.pi0) > MAX_DEGREE + 1:
            raise ValueError(f"pi0 must have 1..{MAX_DEGREE + 1} coefficients")
        object.__setattr__(self, "pi0", tuple(float(c) for c in self.pi0))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ModelInstance":
        types = doc["types"]
        lower, upper = float(types["lower"]), float(types["upper"])
        return cls(
            emission_cap=float(doc["emission_cap"]),
            pi0=tuple(doc["pi0"]),
            slope_a=float(doc.get("a", -1.0)),
            intercept_b=float(doc.get("b", 0.0)),
            type_lower=lower,
            type_upper=upper,
            density=density_from_dict(types.get("density", {"kind": "uniform"}), lower, upper),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ModelInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "emission_cap": self.emission_cap,
            "pi0": list(self.pi0),
            "a": self.slope_a,
            "b": self.intercept_b,
            "types": {"lower": self.type_lower, "upper": self.type_upper,
                      "density": self.density.to_dict()},
        }

    @cached_property
    def poly(self) -> Poly:
        return Poly(self.pi0)

    @cached_property
    def canonical(self) -> "CanonicalInstance":
        """Validated canonical form, computed once."""
        return canonicalize(self)

    def profit(self, theta, e):
        theta = np.asarray(theta, dtype=float)
        e = np.asarray(e, dtype=float)
        return self.poly(e) - theta * (self.slope_a * e + self.intercept_b)

    def type_grid(self, n: int = VALIDATION_GRID) -> np.ndarray:
        return np.linspace(self.type_lower, self.type_upper, n)


@dataclass(frozen=True)
class CanonicalInstance:
    """Canonical economy with profit ``pi0(e) + theta * e``.

    ``scale`` maps original to canonical types (``theta' = scale * theta``,
    ``scale = -a``); ``profit_offset`` is the expected ``-b * theta`` term
    that converts canonical expected profit back to original units.
    """

    emission_cap: float
    pi0: tuple[float, ...]
    type_lower: float
    type_upper: float
    density: Density
    scale: float = 1.0
    intercept_b: float = 0.0
    profit_offset: float = 0.0
    source: ModelInstance | None = field(default=None, compare=False, repr=False)

    @classmethod
    def single_type(cls, pi0, emission_cap: float, theta: float) -> "CanonicalInstance":
        return cls(float(emission_cap), tuple(map(float, pi0)), float(theta), float(theta), PointMass(float(theta)))

    @property
    def is_degenerate(self) -> bool:
        return self.type_lower == self.type_upper

    @cached_property
    def poly(self) -> Poly:
        return Poly(self.pi0)

    @cached_property
    def dpoly(self) -> Poly:
        return self.poly.deriv()

    @cached_property
    def d2poly(self) -> Poly:
        return self.poly.deriv(2)

    def profit(self, theta, e):
        return self.poly(np.asarray(e, dtype=float)) + np.asarray(theta, dtype=float) * np.asarray(e, dtype=float)

    def profit_e(self, theta, e):
        return self.dpoly(np.asarray(e, dtype=float)) + np.asarray(theta, dtype=float)

    def original_type(self, theta):
        if self.scale == 0:
            return np.asarray(theta, dtype=float)
        return np.asarray(theta, dtype=float) / self.scale

    def canonical_type(self, theta):
        return self.scale * np.asarray(theta, dtype=float) if self.scale != 0 else np.zeros_like(theta, dtype=float)

    def original_profit(self, theta, e):
        """Per-type profit in original units (canonical type argument)."""
        if self.scale == 0:
            return self.profit(theta, e) + self.profit_offset
        return self.profit(theta, e) - self.intercept_b * self.original_type(theta)

    def peak(self, theta):
        """Unique maximiser of ``pi(theta, .)`` on [0, cap]."""
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        cap = self.emission_cap
        out = np.where(self.dpoly(0.0) + t <= 0.0, 0.0, cap)
        inner = (self.dpoly(0.0) + t > 0.0) & (self.dpoly(cap) + t < 0.0)
        if np.any(inner):
            out[inner] = _decreasing_root(self.dpoly, self.d2poly, -t[inner], 0.0, cap)
        return out.reshape(np.shape(theta)) if np.ndim(theta) else float(out[0])

    def floor(self, theta):
        """Smallest emission the type weakly prefers to the outside option ``cap``.

        Bisection on ``pi(theta, e) - pi(theta, cap)`` over ``[0, peak(theta)]``;
        tolerates the tangency where floor and peak coincide at the cap.
        """
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        cap = self.emission_cap
        top = self.profit(theta, cap)
        lo = np.zeros_like(theta)
        hi = np.atleast_1d(self.peak(theta)).astype(float)
        g_lo = self.profit(theta, lo) - top
        at_zero = g_lo >= 0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.profit(theta, mid) - top < 0
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, hi)):
                break
        out = np.where(at_zero, 0.0, hi)
        return out if out.size > 1 else float(out[0])

    def peak_inverse(self, e):
        """Type whose unconstrained peak is ``e`` (exact for the canonical family)."""
        return -self.dpoly(np.asarray(e, dtype=float))

    def floor_inverse(self, e):
        """Type indifferent between ``e`` and the cap; the limit ``-pi0'(cap)`` at ``e = cap``."""
        e = np.asarray(e, dtype=float)
        cap = self.emission_cap
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (self.poly(e) - self.poly(cap)) / (cap - e)
        return np.where(e >= cap, -self.dpoly(cap), val)

    @cached_property
    def peak_range(self) -> tuple[float, float]:
        return float(self.peak(self.type_lower)), float(self.peak(self.type_upper))

    @cached_property
    def floor_range(self) -> tuple[float, float]:
        return float(self.floor(self.type_lower)), float(self.floor(self.type_upper))

    def type_grid(self, n: int = VALIDATION_GRID) -> np.ndarray:
        return np.linspace(self.type_lower, self.type_upper, n)

    def expected_original_type(self) -> float:
        return float(self.original_type(self.density.mean()))


def _decreasing_root(fn, dfn, target, lo: float, hi: float):
    """Solve ``fn(x) = target`` for strictly decreasing ``fn`` with a sign change on [lo, hi].

    Safeguarded Newton: a Newton step is taken only when it stays inside the
    current bracket, otherwise the bracket is bisected.
    """
    target = np.asarray(target, dtype=float)
    a = np.full_like(target, lo)
    b = np.full_like(target, hi)
    x = 0.5 * (a + b)
    for _ in range(200):
        g = fn(x) - target
        a = np.where(g > 0, x, a)
        b = np.where(g < 0, x, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - g / dfn(x)
        ok = (newton >= a) & (newton <= b) & np.isfinite(newton)
        x_new = np.where(g == 0, x, np.where(ok, newton, 0.5 * (a + b)))
        done = np.all(np.abs(x_new - x) <= 2 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))
        x = x_new
        if done:
            break
    return x


def _as_model(instance) -> ModelInstance | None:
    return instance if isinstance(instance, ModelInstance) else None


def validate_assumptions(instance: ModelInstance | CanonicalInstance, grid: int = VALIDATION_GRID) -> dict[str, Any]:
    """Grid check of the regularity assumptions; never raises.

    Returns a report with one ``{"name", "pass", "detail"}`` entry per item
    and an ``ok`` summary.
    """
    items: list[dict[str, Any]] = []
    cap = instance.emission_cap
    lower, upper = instance.type_lower, instance.type_upper
    poly = Poly(instance.pi0)

    items.append({"name": "support", "pass": bool(lower <= upper and (lower < upper or isinstance(instance, CanonicalInstance))),
                  "detail": f"[{lower}, {upper}]"})
    items.append({"name": "emission_cap", "pass": bool(cap > 0), "detail": f"cap={cap}"})
    items.append({"name": "continuity", "pass": True, "detail": "polynomial profit, continuous by construction"})

    e = np.linspace(0.0, cap, grid)
    curv = poly.deriv(2)(e)
    worst = int(np.argmax(curv))
    items.append({"name": "strict_concavity", "pass": bool(np.all(curv < 0)),
                  "detail": f"max pi0''={curv[worst]:.6g} at e={e[worst]:.6g}"})

    thetas = np.linspace(lower, upper, grid)
    if isinstance(instance, ModelInstance):
        gap = instance.profit(thetas, cap) - instance.profit(thetas, 0.0)
    else:
        gap = instance.profit(thetas, cap) - instance.profit(thetas, 0.0)
    bad = thetas[gap <= 0]
    items.append({"name": "outside_option_ordering", "pass": bool(bad.size == 0),
                  "detail": "pi(theta,0) < pi(theta,cap) on grid" if bad.size == 0
                  else f"fails for theta in [{bad.min():.6g}, {bad.max():.6g}]"})

    dens = instance.density
    if lower < upper:
        interior = np.linspace(lower, upper, grid)[1:-1]
        pos = bool(np.all(dens.pdf(interior) > 0))
        norm = bool(abs(float(dens.cdf(lower))) <= 1e-10 and abs(float(dens.cdf(upper)) - 1.0) <= 1e-10)
        mono = bool(np.all(np.diff(dens.cdf(np.linspace(lower, upper, grid))) >= -1e-14))
        items.append({"name": "density", "pass": pos and norm and mono,
                      "detail": f"positive={pos} normalised={norm} cdf_monotone={mono}"})

    report: dict[str, Any] = {"items": items, "ok": all(i["pass"] for i in items)}
    if report["ok"]:
        canon = canonicalize(instance, check=False)
        lo_t, hi_t = canon.type_lower, canon.type_upper
        peak = np.atleast_1d(canon.peak(np.array([lo_t, hi_t])))
        flo = np.atleast_1d(canon.floor(np.array([lo_t, hi_t])))
        report["interior"] = {
            "peak_lower": bool(0 < peak[0] < cap), "peak_upper": bool(0 < peak[-1] < cap),
            "floor_lower": bool(0 < flo[0] < cap), "floor_upper": bool(0 < flo[-1] < cap),
        }
    return report


def canonicalize(instance: ModelInstance | CanonicalInstance, check: bool = True) -> CanonicalInstance:
    """Re-express an instance with slope -1 and intercept 0.

    Raises ``AssumptionError`` naming the failed item when ``check`` is set
    and the instance violates the regularity assumptions.
    """
    if isinstance(instance, CanonicalInstance):
        return instance
    if check:
        report = validate_assumptions(instance)
        failed = [i for i in report["items"] if not i["pass"]]
        if failed:
            names = ", ".join(f"{i['name']} ({i['detail']})" for i in failed)
            raise AssumptionError(f"instance violates: {names}")
    a, b = instance.slope_a, instance.intercept_b
    mean_type = instance.density.mean()
    if a == 0:
        # all types share one profit function up to the constant -b*theta
        return CanonicalInstance(
            instance.emission_cap, instance.pi0, 0.0, 0.0, PointMass(0.0),
            scale=0.0, intercept_b=b, profit_offset=-b * mean_type, source=instance,
        )
    scale = -a
    lo, hi = sorted((scale * instance.type_lower, scale * instance.type_upper))
    return CanonicalInstance(
        instance.emission_cap, instance.pi0, lo, hi, instance.density.pushforward(scale),
        scale=scale, intercept_b=b, profit_offset=-b * mean_type, source=instance,
    )


def as_canonical(instance: ModelInstance | CanonicalInstance) -> CanonicalInstance:
    return instance.canonical if isinstance(instance, ModelInstance) else instance


def profit(instance: ModelInstance | CanonicalInstance, theta: float, e: float) -> float:
    """Profit in the instance's own coordinates; out-of-domain arguments raise."""
    cap = instance.emission_cap
    if not (0.0 <= e <= cap):
        raise ValueError(f"emission {e} outside [0, {cap}]")
    if not (instance.type_lower <= theta <= instance.type_upper):
        raise ValueError(f"type {theta} outside [{instance.type_lower}, {instance.type_upper}]")
    return float(instance.profit(theta, e))


def _canonical_theta(instance, theta):
    if isinstance(instance, ModelInstance):
        canon = as_canonical(instance)
        return canon, canon.canonical_type(theta)
    return instance, theta


def peak_emission(instance: ModelInstance | CanonicalInstance, theta):
    """Type's full-information emission choice."""
    canon, t = _canonical_theta(instance, theta)
    return canon.peak(t)


def participation_floor(instance: ModelInstance | CanonicalInstance, theta):
    """Lowest emission the type accepts over the outside option."""
    canon, t = _canonical_theta(instance, theta)
    return canon.floor(t)
