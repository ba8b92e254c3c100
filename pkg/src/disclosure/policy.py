"""Finite disclosure policies and the equilibria they induce.

A policy is a list of regions covering ``[0, cap]``. The first region is
closed, later ones are left-open (``(lo, hi]``). A transparent region reveals
every emission; a pooled region is one cell, and an emission inside it is
read by the market as the cell's supremum ``hi``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .model import CanonicalInstance, ModelInstance, as_canonical
from .quadrature import QUAD_NODES, nodes_on, split_points

TIE_TOL = 1e-12
IMPLEMENTABILITY_TOL = 1e-9


class Mode(enum.Enum):
    TRANSPARENT = "transparent"
    POOLED = "pooled"


@dataclass(frozen=True)
class Region:
    lo: float
    hi: float
    mode: Mode


@dataclass(frozen=True)
class DisclosurePolicy:
    regions: tuple[Region, ...]

    def __post_init__(self):
        regs = tuple(self.regions)
        if not regs:
            raise ValueError("policy needs at least one region")
        if regs[0].lo != 0.0:
            raise ValueError("first region must start at 0")
        for r in regs:
            if r.hi < r.lo:
                raise ValueError(f"region [{r.lo}, {r.hi}] is reversed")
        for prev, nxt in zip(regs[:-1], regs[1:]):
            if abs(prev.hi - nxt.lo) > 1e-12:
                raise ValueError(f"regions must be contiguous: gap between {prev.hi} and {nxt.lo}")
        object.__setattr__(self, "regions", regs)

    @property
    def cap(self) -> float:
        return self.regions[-1].hi

    @classmethod
    def full_disclosure(cls, cap: float) -> "DisclosurePolicy":
        return cls((Region(0.0, cap, Mode.TRANSPARENT),))

    @classmethod
    def no_disclosure(cls, cap: float) -> "DisclosurePolicy":
        return cls((Region(0.0, cap, Mode.POOLED),))

    @classmethod
    def threshold(cls, e_star: float, cap: float) -> "DisclosurePolicy":
        """Transparent on ``[0, e_star]``, pooled on ``(e_star, cap]``."""
        if e_star >= cap:
            return cls.full_disclosure(cap)
        return cls((Region(0.0, e_star, Mode.TRANSPARENT), Region(e_star, cap, Mode.POOLED)))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DisclosurePolicy":
        return cls(tuple(Region(float(r["lo"]), float(r["hi"]), Mode(r["mode"])) for r in doc["regions"]))

    def to_dict(self) -> dict[str, Any]:
        return {"regions": [{"lo": r.lo, "hi": r.hi, "mode": r.mode.value} for r in self.regions]}

    def pooled_cells(self) -> list[tuple[float, float, bool]]:
        """Non-singleton cells as ``(lo, hi, closed_at_lo)``."""
        cells = []
        for i, r in enumerate(self.regions):
            if r.mode is Mode.POOLED and r.hi > r.lo:
                cells.append((r.lo, r.hi, i == 0))
        return cells


@dataclass(frozen=True)
class Menu:
    """Sorted disjoint closed intervals; a point is an interval with ``lo == hi``."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("empty menu")

    def __contains__(self, e: float) -> bool:
        return any(lo <= e <= hi for lo, hi in self.intervals)

    @property
    def top(self) -> float:
        return self.intervals[-1][1]


def _merge(intervals: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    out: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return tuple((lo, hi) for lo, hi in out)


def belief_compatible_menu(policy: DisclosurePolicy) -> Menu:
    """Emissions the market can believe: all of a transparent region, the top of a pooled one."""
    parts = []
    for r in policy.regions:
        parts.append((r.lo, r.hi) if r.mode is Mode.TRANSPARENT else (r.hi, r.hi))
    return Menu(_merge(parts))


def _candidates(canon: CanonicalInstance, theta: np.ndarray, menu: Menu):
    """Per type, the best emission inside each menu interval and its clamp state."""
    peak = np.atleast_1d(canon.peak(theta))
    lows = np.array([lo for lo, _ in menu.intervals])
    highs = np.array([hi for _, hi in menu.intervals])
    cand = np.clip(peak[:, None], lows[None, :], highs[None, :])
    state = np.where(peak[:, None] <= lows[None, :], 0, np.where(peak[:, None] >= highs[None, :], 2, 1))
    state = np.where(lows[None, :] == highs[None, :], 0, state)
    return cand, state


def _respond(canon: CanonicalInstance, theta, menu: Menu):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cand, state = _candidates(canon, theta, menu)
    vals = canon.profit(theta[:, None], cand)
    best = vals.max(axis=1, keepdims=True)
    # candidates are sorted by emission, so the first near-maximiser is the lowest
    choice = np.argmax(vals >= best - TIE_TOL, axis=1)
    rows = np.arange(theta.size)
    return cand[rows, choice], choice, state[rows, choice]


def best_response(instance: ModelInstance | CanonicalInstance, theta, menu: Menu):
    """Profit-maximising belief-compatible emission, lowest on ties."""
    canon = as_canonical(instance)
    e, _, _ = _respond(canon, theta, menu)
    return e if np.ndim(theta) else float(e[0])


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    follows_peak: bool
    value: float | None = None

    def describe(self) -> str:
        return "FOLLOW_PEAK" if self.follows_peak else f"CONSTANT({self.value:.10g})"


@dataclass(frozen=True)
class EmissionScheme:
    """Piecewise map from (canonical) types to emissions.

    The first segment is closed, later ones are ``(lo, hi]``, so a boundary
    type sits in the lower segment.
    """

    segments: tuple[Segment, ...]

    @classmethod
    def constant(cls, instance, value: float) -> "EmissionScheme":
        canon = as_canonical(instance)
        return cls((Segment(canon.type_lower, canon.type_upper, False, float(value)),))

    @classmethod
    def follow_peak(cls, instance) -> "EmissionScheme":
        canon = as_canonical(instance)
        return cls((Segment(canon.type_lower, canon.type_upper, True),))

    @property
    def breaks(self) -> tuple[float, ...]:
        return tuple(s.hi for s in self.segments[:-1])

    def emission(self, canon: CanonicalInstance, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        his = np.array([s.hi for s in self.segments[:-1]])
        idx = np.searchsorted(his, theta, side="left")
        out = np.empty_like(theta)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if not np.any(mask):
                continue
            out[mask] = np.atleast_1d(canon.peak(theta[mask])) if seg.follows_peak else seg.value
        return out

    def describe(self) -> list[str]:
        return [f"[{s.lo:.10g}, {s.hi:.10g}] {s.describe()}" for s in self.segments]


def _label(canon, theta, menu):
    _, choice, state = _respond(canon, theta, menu)
    return choice * 3 + state


def equilibrium_scheme(instance: ModelInstance | CanonicalInstance, policy: DisclosurePolicy,
                       probe: int = 257, tol: float = 1e-13) -> EmissionScheme:
    """Equilibrium emission scheme of a policy.

    Types are probed on a grid; wherever the chosen (menu cell, clamp state)
    label changes, the switching type is located by bisection. Labels are
    monotone in the type, so every switch is found in order.
    """
    canon = as_canonical(instance)
    menu = belief_compatible_menu(policy)
    lo_t, hi_t = canon.type_lower, canon.type_upper
    if canon.is_degenerate:
        e = best_response(canon, lo_t, menu)
        return EmissionScheme((Segment(lo_t, hi_t, False, e),))

    grid = np.linspace(lo_t, hi_t, probe)
    labels = _label(canon, grid, menu)
    cuts: list[tuple[float, int]] = []
    current = int(labels[0])
    for i in range(1, probe):
        a, b = grid[i - 1], grid[i]
        while current != int(labels[i]):
            x_lo, x_hi = a, b
            while x_hi - x_lo > tol * max(1.0, abs(x_hi)):
                mid = 0.5 * (x_lo + x_hi)
                if int(_label(canon, mid, menu)[0]) == current:
                    x_lo = mid
                else:
                    x_hi = mid
            nxt = int(_label(canon, x_hi, menu)[0])
            cuts.append((x_lo, nxt))
            current = nxt
            a = x_hi

    bounds = [lo_t] + [c for c, _ in cuts] + [hi_t]
    lab_seq = [int(labels[0])] + [lab for _, lab in cuts]
    segs: list[Segment] = []
    for (a, b), lab in zip(zip(bounds[:-1], bounds[1:]), lab_seq):
        cell, state = divmod(lab, 3)
        lo_e, hi_e = menu.intervals[cell]
        seg = Segment(a, b, True) if state == 1 else Segment(a, b, False, lo_e if state == 0 else hi_e)
        if segs and segs[-1].follows_peak == seg.follows_peak and segs[-1].value == seg.value:
            segs[-1] = Segment(segs[-1].lo, b, seg.follows_peak, seg.value)
        elif b > a or not segs:
            segs.append(seg)
    return EmissionScheme(tuple(segs))


def expected_outcomes(instance: ModelInstance | CanonicalInstance, scheme: EmissionScheme,
                      quad_nodes: int = QUAD_NODES) -> tuple[float, float]:
    """Expected emission and expected profit (original profit units).

    One Gauss-Legendre rule per smooth piece: segments are further split at
    density breakpoints.
    """
    canon = as_canonical(instance)
    if canon.is_degenerate:
        t = canon.type_lower
        e = float(scheme.emission(canon, t)[0])
        return e, float(canon.profit(t, e)) + canon.profit_offset
    dens = canon.density
    gamma = 0.0
    pi = 0.0
    for seg in scheme.segments:
        pts = split_points(seg.lo, seg.hi, dens.breakpoints)
        for a, b in zip(pts[:-1], pts[1:]):
            if b <= a:
                continue
            x, w = nodes_on(a, b, quad_nodes)
            e = np.atleast_1d(canon.peak(x)) if seg.follows_peak else np.full_like(x, seg.value)
            wf = w * dens.pdf(x)
            gamma += float(np.dot(wf, e))
            pi += float(np.dot(wf, canon.profit(x, e)))
    return gamma, pi + canon.profit_offset


def policy_outcomes(instance, policy: DisclosurePolicy, quad_nodes: int = QUAD_NODES) -> tuple[float, float]:
    return expected_outcomes(instance, equilibrium_scheme(instance, policy), quad_nodes)


def _cell_of(policy: DisclosurePolicy, e: float) -> tuple[float, float, bool] | None:
    """The pooled cell containing ``e``, or ``None`` when ``e`` is a singleton cell."""
    for lo, hi, closed in policy.pooled_cells():
        if (lo < e <= hi) or (closed and e == lo):
            return lo, hi, closed
    return None


def is_finer(d1: DisclosurePolicy, d2: DisclosurePolicy) -> bool:
    """Whether every cell of ``d1`` lies inside a cell of ``d2``.

    Transparent regions are singleton cells, which always fit; a pooled
    cell of ``d1`` must sit inside one pooled cell of ``d2``.
    """
    for lo, hi, closed in d1.pooled_cells():
        host = _cell_of(d2, hi)
        if host is None:
            return False
        h_lo, h_hi, h_closed = host
        if hi > h_hi:
            return False
        if closed:
            if not (h_closed and h_lo <= lo):
                return False
        elif lo < h_lo:
            return False
    return True


def check_implementable(instance: ModelInstance | CanonicalInstance, scheme: EmissionScheme, grid_size: int = 201,
                        tol: float = IMPLEMENTABILITY_TOL) -> tuple[bool, dict[str, Any] | None]:
    """Grid test of incentive compatibility and participation.

    Returns ``(ok, witness)``; the witness names the worst violation as
    ``{"kind": "IC"|"IR", "theta": ..., "theta_prime": ..., "violation": ...}``.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    canon = as_canonical(instance)
    theta = canon.type_grid(grid_size)
    e = scheme.emission(canon, theta)
    own = canon.profit(theta, e)
    ic = canon.profit(theta[:, None], e[None, :]) - own[:, None]
    ir = canon.profit(theta, canon.emission_cap) - own
    i, j = np.unravel_index(np.argmax(ic), ic.shape)
    k = int(np.argmax(ir))
    worst_ic, worst_ir = float(ic[i, j]), float(ir[k])
    if worst_ic <= tol and worst_ir <= tol:
        return True, None
    if worst_ir >= worst_ic:
        return False, {"kind": "IR", "theta": float(theta[k]), "theta_prime": None, "violation": worst_ir}
    return False, {"kind": "IC", "theta": float(theta[i]), "theta_prime": float(theta[j]), "violation": worst_ic}


def write_scheme_csv(path, instance, scheme: EmissionScheme, n: int = 101, header_comment: str | None = None) -> None:
    canon = as_canonical(instance)
    theta = canon.type_grid(n)
    e = scheme.emission(canon, theta)
    prof = canon.original_profit(theta, e)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["theta", "emission", "profit"])
        for row in zip(canon.original_type(theta) if canon.scale else theta, e, prof):
            w.writerow([f"{v:.12g}" for v in row])


def random_policy(rng: np.random.Generator, cap: float, max_regions: int = 5) -> DisclosurePolicy:
    """A random finite policy (used by property tests and the CLI demo)."""
    k = int(rng.integers(1, max_regions + 1))
    cuts = np.sort(rng.uniform(0.0, cap, size=k - 1))
    edges = [0.0, *cuts.tolist(), cap]
    modes = rng.choice([Mode.TRANSPARENT, Mode.POOLED], size=k)
    return DisclosurePolicy(tuple(Region(a, b, m) for a, b, m in zip(edges[:-1], edges[1:], modes)))


def coarsen(policy: DisclosurePolicy, merge: Sequence[int]) -> DisclosurePolicy:
    """Pool the regions with the given consecutive indices into one cell."""
    idx = sorted(merge)
    if idx != list(range(idx[0], idx[-1] + 1)):
        raise ValueError("can only merge consecutive regions")
    regs = list(policy.regions)
    merged = Region(regs[idx[0]].lo, regs[idx[-1]].hi, Mode.POOLED)
    return DisclosurePolicy(tuple(regs[: idx[0]] + [merged] + regs[idx[-1] + 1:]))
