"""Emission/profit Pareto frontier of threshold policies."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .certify import log_concavity_check
from .model import as_canonical
from .policy import EmissionScheme, expected_outcomes
from .threshold import optimize_threshold, threshold_scheme

DEDUP_TOL = 1e-7
PARETO_TOL = 1e-9
FD_GRID = 401


@dataclass(frozen=True)
class FrontierPoint:
    alpha: float
    e_star: float
    Gamma: float
    Pi: float
    W: float
    flags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d


def _point(c, alpha, e_star, flags=()) -> FrontierPoint:
    gamma, pi = expected_outcomes(c, threshold_scheme(c, e_star))
    return FrontierPoint(float(alpha), float(e_star), gamma, pi, -alpha * gamma + (1 - alpha) * pi, tuple(flags))


def full_disclosure_point(instance) -> FrontierPoint:
    c = as_canonical(instance)
    gamma, pi = expected_outcomes(c, EmissionScheme.follow_peak(c))
    return FrontierPoint(0.0, float(c.peak(c.type_upper)), gamma, pi, pi, ("full-disclosure",))


def no_disclosure_point(instance) -> FrontierPoint:
    """Everyone at the cap; no weight selects it, so ``alpha`` and ``W`` are NaN."""
    c = as_canonical(instance)
    gamma, pi = expected_outcomes(c, EmissionScheme.constant(c, c.emission_cap))
    return FrontierPoint(math.nan, float(c.emission_cap), gamma, pi, math.nan, ("no-disclosure",))


def _gp(p) -> tuple[float, float]:
    if hasattr(p, "Gamma"):
        return float(p.Gamma), float(p.Pi)
    return float(p[0]), float(p[1])


def pareto_filter(points: Sequence, tol: float = PARETO_TOL) -> list:
    """Drop weakly dominated points (lower-or-equal profit, higher-or-equal emission, one strict).

    Accepts ``FrontierPoint``-like objects or ``(Gamma, Pi, ...)`` tuples and
    returns the survivors sorted by ``Gamma``.
    """
    pts = list(points)
    gp = [_gp(p) for p in pts]
    keep = []
    for i, (g, p) in enumerate(gp):
        dominated = False
        for j, (g2, p2) in enumerate(gp):
            if i == j:
                continue
            if g2 <= g + tol and p2 >= p - tol and (g2 < g - tol or p2 > p + tol):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return [pts[i] for i in sorted(keep, key=lambda i: (gp[i][0], -gp[i][1]))]


def _dedupe(points: list[FrontierPoint], tol: float = DEDUP_TOL) -> list[FrontierPoint]:
    out: list[FrontierPoint] = []
    for p in points:
        if not any(abs(p.Gamma - q.Gamma) <= tol and abs(p.Pi - q.Pi) <= tol for q in out):
            out.append(p)
    return out


def trace_frontier(instance, alpha_count: int = 101, tie_break: str = "largest") -> list[FrontierPoint]:
    """Optimal thresholds over a uniform weight grid, deduplicated and Pareto-filtered.

    Where welfare is flat at the top, the largest optimal threshold is kept:
    expected profit rises with the threshold below the top type's peak, so
    smaller representatives of a flat stretch are dominated.
    """
    if alpha_count < 2:
        raise ValueError("alpha_count must be at least 2")
    c = as_canonical(instance)
    if c.is_degenerate:
        return [full_disclosure_point(c)]
    base_flags = [] if log_concavity_check(c)["log_concave"] else ["heuristic"]
    pts = []
    for a in np.linspace(0.0, 1.0, alpha_count):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sp = optimize_threshold(c, float(a), tie_break=tie_break)
        flags = list(base_flags)
        if sp.foc_case.name == "AT_KINK":
            flags.append("kink")
        if any("local maxima" in str(w.message) for w in caught):
            flags.append("multimodal")
        for w in caught:
            if "local maxima" in str(w.message):
                warnings.warn(w.message, w.category, stacklevel=2)
        pts.append(_point(c, float(a), sp.e_star, flags))
    return pareto_filter(_dedupe(pts))


def full_disclosure_only(instance, grid: int = FD_GRID, tol: float = 1e-8) -> tuple[bool, float | None]:
    """Sufficient condition under which full disclosure is the only efficient policy.

    In canonical orientation: some cutoff type above which every type's
    participation floor is the cap, with the density nondecreasing below it.
    The witness is reported in the instance's original type coordinates.
    """
    c = as_canonical(instance)
    if c.is_degenerate:
        return True, float(c.original_type(c.type_lower)) if c.scale else float(c.type_lower)
    lo, hi = c.type_lower, c.type_upper
    cap = c.emission_cap
    theta = c.type_grid(grid)
    analytic = float(np.clip(-c.dpoly(cap), lo, hi))
    cands = np.unique(np.concatenate([theta, [analytic]]))
    floor = np.atleast_1d(c.floor(cands))
    pdf = c.density.pdf(cands)
    at_cap = floor >= cap - tol
    # suffix: every candidate at or above i is at the cap
    suffix_ok = np.flip(np.logical_and.accumulate(np.flip(at_cap)))
    rising = np.concatenate([[True], np.diff(pdf) >= -1e-12])
    prefix_ok = np.logical_and.accumulate(rising)
    ok = suffix_ok & prefix_ok
    if not np.any(ok):
        return False, None
    t = float(cands[int(np.argmax(ok))])
    return True, float(c.original_type(t)) if c.scale else t


def write_frontier_csv(path, points: Sequence[FrontierPoint], header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["alpha", "e_star", "gamma", "pi", "w", "flags"])
        for p in points:
            w.writerow([f"{p.alpha:.10g}", f"{p.e_star:.10g}", f"{p.Gamma:.10g}", f"{p.Pi:.10g}",
                        f"{p.W:.10g}", ";".join(p.flags)])
