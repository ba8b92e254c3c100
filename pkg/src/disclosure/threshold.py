"""Threshold policies: boundary types, welfare, derivatives and the optimiser.

A threshold policy with threshold ``e*`` is transparent on ``[0, e*]`` and
pools ``(e*, cap]``. In equilibrium, types up to ``theta_hat`` follow their
peak, types in ``(theta_hat, theta_star]`` bunch at ``e*``, and the rest
take the cap. Everything here works in canonical coordinates; welfare is
reported with profit in original units.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .model import CanonicalInstance, ModelInstance, as_canonical
from .policy import EmissionScheme, Segment, expected_outcomes
from .quadrature import QUAD_NODES, gauss_legendre, integrate

log = logging.getLogger(__name__)

DERIV_TOL = 1e-12
SNAP_TOL = 1e-9
KINK_TOL = 1e-12
TYPE_SNAP = 1e-12
SEARCH_GRID = 201
MULTISTART = 16
MULTIMODAL_GAP = 1e-6


class MultimodalWarning(RuntimeWarning):
    """Welfare over thresholds has several separated local maxima."""


@dataclass(frozen=True)
class ThresholdBoundaries:
    e_star: float
    theta_hat: float
    theta_star: float
    hat_case: str  # "below", "interior" or "above" the peak range
    star_case: str  # same, relative to the floor range


def boundaries(instance: ModelInstance | CanonicalInstance, e_star: float) -> ThresholdBoundaries:
    """Boundary types of the threshold equilibrium at ``e_star``."""
    c = as_canonical(instance)
    cap = c.emission_cap
    if not 0.0 <= e_star <= cap:
        raise ValueError(f"threshold {e_star} outside [0, {cap}]")
    lo_t, hi_t = c.type_lower, c.type_upper
    pk_lo, pk_hi = c.peak_range
    if e_star < pk_lo:
        th, hat_case = lo_t, "below"
    elif e_star > pk_hi or e_star >= cap:
        th, hat_case = hi_t, "above"
    else:
        th, hat_case = float(np.clip(c.peak_inverse(e_star), lo_t, hi_t)), "interior"
    fl_lo, fl_hi = c.floor_range
    if e_star < fl_lo:
        ts, star_case = lo_t, "below"
    elif e_star > fl_hi:
        ts, star_case = hi_t, "above"
    else:
        ts, star_case = float(np.clip(c.floor_inverse(e_star), lo_t, hi_t)), "interior"
    th, ts = (float(v) for v in _snap_types(np.array([th, ts]), lo_t, hi_t))
    ts = max(ts, th)
    return ThresholdBoundaries(float(e_star), th, ts, hat_case, star_case)


def _snap_types(t, lo, hi):
    """Round boundary types lying within float noise of the support ends onto them."""
    tol = TYPE_SNAP * max(1.0, abs(lo), abs(hi))
    t = np.where(np.abs(t - lo) <= tol, lo, t)
    return np.where(np.abs(t - hi) <= tol, hi, t)


def threshold_scheme(instance: ModelInstance | CanonicalInstance, e_star: float) -> EmissionScheme:
    c = as_canonical(instance)
    cap = c.emission_cap
    if c.is_degenerate:
        t = c.type_lower
        pk = float(c.peak(t))
        if pk <= e_star:
            return EmissionScheme((Segment(t, t, True),))
        val = e_star if c.profit(t, e_star) >= c.profit(t, cap) else cap
        return EmissionScheme((Segment(t, t, False, float(val)),))
    b = boundaries(c, e_star)
    raw = [
        Segment(c.type_lower, b.theta_hat, True),
        Segment(b.theta_hat, b.theta_star, False, float(e_star)),
        Segment(b.theta_star, c.type_upper, False, float(cap)),
    ]
    segs = tuple(s for s in raw if s.hi > s.lo)
    return EmissionScheme(segs)


def welfare(instance, e_star: float, alpha: float, quad_nodes: int = QUAD_NODES) -> float:
    """``-alpha * Gamma + (1 - alpha) * Pi`` of the threshold equilibrium."""
    _check_alpha(alpha)
    gamma, pi = expected_outcomes(instance, threshold_scheme(instance, e_star), quad_nodes)
    return -alpha * gamma + (1.0 - alpha) * pi


def threshold_outcomes(instance, e_stars, quad_nodes: int = QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Expected emission and profit for many thresholds at once.

    Same quadrature as ``expected_outcomes`` (one rule per smooth piece),
    batched over thresholds.
    """
    c = as_canonical(instance)
    es = np.atleast_1d(np.asarray(e_stars, dtype=float))
    if c.is_degenerate:
        out = np.array([expected_outcomes(c, threshold_scheme(c, e), quad_nodes) for e in es])
        return out[:, 0], out[:, 1]
    cap = c.emission_cap
    lo, hi = c.type_lower, c.type_upper
    pk_lo, pk_hi = c.peak_range
    fl_lo, fl_hi = c.floor_range
    th = np.where(es < pk_lo, lo, np.where((es > pk_hi) | (es >= cap), hi,
                                           np.clip(c.peak_inverse(es), lo, hi)))
    ts = np.where(es < fl_lo, lo, np.where(es > fl_hi, hi, np.clip(c.floor_inverse(es), lo, hi)))
    th, ts = _snap_types(th, lo, hi), _snap_types(ts, lo, hi)
    ts = np.maximum(ts, th)
    knots = [lo, *sorted(b for b in c.density.breakpoints if lo < b < hi), hi]
    xg, wg = gauss_legendre(quad_nodes)
    gamma = np.zeros_like(es)
    pi = np.zeros_like(es)
    for a, b, kind in ((np.full_like(es, lo), th, "peak"), (th, ts, "bunch"), (ts, np.full_like(es, hi), "cap")):
        for k0, k1 in zip(knots[:-1], knots[1:]):
            pa, pb = np.clip(a, k0, k1), np.clip(b, k0, k1)
            half = 0.5 * (pb - pa)
            x = (0.5 * (pa + pb))[:, None] + half[:, None] * xg[None, :]
            if kind == "peak":
                e = np.asarray(c.peak(x.ravel())).reshape(x.shape)
            elif kind == "bunch":
                e = np.broadcast_to(es[:, None], x.shape)
            else:
                e = np.full_like(x, cap)
            wf = half[:, None] * wg[None, :] * c.density.pdf(x)
            gamma += np.sum(wf * e, axis=1)
            pi += np.sum(wf * c.profit(x, e), axis=1)
    return gamma, pi + c.profit_offset


def welfare_grid(instance, e_stars, alpha: float, quad_nodes: int = QUAD_NODES) -> np.ndarray:
    _check_alpha(alpha)
    gamma, pi = threshold_outcomes(instance, e_stars, quad_nodes)
    return -alpha * gamma + (1.0 - alpha) * pi


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")


def kink(instance) -> float:
    """Threshold at which the top type becomes indifferent: ``e_(theta_bar)``."""
    return as_canonical(instance).floor_range[1]


def _bunching_integral(c: CanonicalInstance, b: ThresholdBoundaries, alpha: float,
                       quad_nodes: int = QUAD_NODES) -> float:
    """``int_{theta_hat}^{theta_star} [-alpha + (1-alpha) pi_e(theta, e*)] dF``."""
    e = b.e_star
    dens = c.density
    return integrate(lambda t: (-alpha + (1.0 - alpha) * c.profit_e(t, e)) * dens.pdf(t),
                     b.theta_hat, b.theta_star, dens.breakpoints, quad_nodes)


def _binding(c: CanonicalInstance, e_star: float, side: str) -> bool:
    k = c.floor_range[1]
    if abs(e_star - k) <= KINK_TOL * max(1.0, abs(k)):
        return side == "left" and k < c.emission_cap
    return e_star < k


def _top_term(c: CanonicalInstance, b: ThresholdBoundaries, alpha: float) -> float:
    """``alpha f(theta*) pi_e(theta*, e*)``, the top-type reallocation term."""
    return float(alpha * c.density.pdf(b.theta_star) * c.profit_e(b.theta_star, b.e_star))


def _domain(c: CanonicalInstance) -> tuple[float, float]:
    return c.floor_range[0], c.emission_cap


def welfare_derivative(instance, e_star: float, alpha: float, side: str = "right",
                       quad_nodes: int = QUAD_NODES) -> float:
    """One-sided derivative of welfare in the threshold."""
    _check_alpha(alpha)
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    c = as_canonical(instance)
    if c.is_degenerate:
        raise ValueError("welfare is not differentiable in the threshold for a single-type economy")
    lo, hi = _domain(c)
    ok = (lo < e_star <= hi) if side == "left" else (lo <= e_star < hi)
    if not ok:
        raise ValueError(f"threshold {e_star} outside the differentiable domain ({lo}, {hi})")
    b = boundaries(c, e_star)
    val = _bunching_integral(c, b, alpha, quad_nodes)
    if _binding(c, e_star, side):
        val += _top_term(c, b, alpha)
    return float(val)


class FocCase(enum.Enum):
    BELOW_KINK = "e* < e_(theta_bar)"
    AT_KINK = "e* = e_(theta_bar)"
    AT_CAP = "e* = e_(theta_bar) = cap"
    ABOVE_KINK = "e* > e_(theta_bar)"


def foc_case(instance, e_star: float) -> FocCase:
    c = as_canonical(instance)
    k = c.floor_range[1]
    if abs(e_star - k) <= SNAP_TOL:
        return FocCase.AT_CAP if k >= c.emission_cap else FocCase.AT_KINK
    return FocCase.BELOW_KINK if e_star < k else FocCase.ABOVE_KINK


def foc_residual(instance, e_star: float, alpha: float, quad_nodes: int = QUAD_NODES) -> tuple[FocCase, float]:
    """Deviation from the first-order condition of the threshold problem.

    With ``V = -int [-alpha + (1-alpha) pi_e] dF`` over the bunching interval
    and ``T = alpha f(theta*) pi_e(theta*, e*)``: below the kink the residual
    is ``T - V``; at the kink it is the signed distance of ``V`` outside
    ``[0, T]``; above it, ``-V``.
    """
    _check_alpha(alpha)
    c = as_canonical(instance)
    lo, hi = _domain(c)
    if not lo < e_star <= hi:
        raise ValueError(f"threshold {e_star} outside ({lo}, {hi}]")
    case = foc_case(c, e_star)
    b = boundaries(c, e_star)
    v = -_bunching_integral(c, b, alpha, quad_nodes)
    t = _top_term(c, b, alpha)
    if case is FocCase.BELOW_KINK:
        return case, float(t - v)
    if case is FocCase.ABOVE_KINK:
        return case, float(-v)
    if v < 0.0:
        return case, float(v)
    if v > t:
        return case, float(v - t)
    return case, 0.0


@dataclass(frozen=True)
class ScalarizedPoint:
    alpha: float
    e_star: float
    W: float
    left_derivative: float
    right_derivative: float
    foc_case: FocCase
    method: str = "derivative"
    warnings: tuple[str, ...] = field(default=())


def _snap(c: CanonicalInstance, e: float) -> float:
    for target in (c.floor_range[1], c.peak_range[0], c.peak_range[1]):
        if abs(e - target) <= SNAP_TOL:
            return float(target)
    return float(e)


def _safe_derivative(c, e, alpha, side):
    try:
        return welfare_derivative(c, e, alpha, side)
    except ValueError:
        return float("nan")


def _bisect(pred, lo: float, hi: float, iters: int = 200) -> float:
    """Boundary of a predicate that is False on the left and True on the right."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _search_interval(c: CanonicalInstance) -> tuple[float, float]:
    lo = c.floor_range[0]
    hi = max(c.peak_range[1], lo)
    return lo, hi


def _derivative_search(c, alpha, lo, hi, tie_break):
    cap = c.emission_cap
    if tie_break == "smallest":
        def pred(e):
            if e >= hi and hi >= cap:
                return True
            return welfare_derivative(c, e, alpha, "right") <= DERIV_TOL
        if pred(lo):
            return lo
        return _bisect(pred, lo, hi)

    # largest optimum: where welfare starts to fall strictly
    def falling(e):
        if e >= hi:
            return True
        return welfare_derivative(c, e, alpha, "right") < -DERIV_TOL
    if falling(lo):
        return lo
    return _bisect(falling, lo, hi)


def _multistart(c, alpha, grid, values, tie_break):
    order = np.argsort(-values, kind="stable")
    peaks = []
    n = len(grid)
    for i in range(n):
        left = values[i - 1] if i > 0 else -np.inf
        right = values[i + 1] if i < n - 1 else -np.inf
        if values[i] >= left and values[i] >= right:
            peaks.append(i)
    peaks = sorted(peaks, key=lambda i: -values[i])[:MULTISTART] or [int(order[0])]
    found = []
    for i in peaks:
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, n - 1)]
        if b > a:
            res = minimize_scalar(lambda e: -welfare(c, e, alpha), bounds=(a, b), method="bounded",
                                  options={"xatol": 1e-12})
            e_best, w_best = float(res.x), -float(res.fun)
            if values[i] > w_best:
                e_best, w_best = float(grid[i]), float(values[i])
        else:
            e_best, w_best = float(grid[i]), float(values[i])
        found.append((e_best, w_best))
    best_w = max(w for _, w in found)
    ties = [e for e, w in found if w >= best_w - 1e-12]
    e_opt = min(ties) if tie_break == "smallest" else max(ties)
    others = [w for e, w in found if abs(e - e_opt) > 1e-6 and best_w - w > MULTIMODAL_GAP]
    return e_opt, others


def optimize_threshold(instance, alpha: float, tie_break: str = "smallest",
                       grid: int = SEARCH_GRID) -> ScalarizedPoint:
    """Welfare-maximising threshold.

    Thresholds above the top type's peak induce the same scheme, so the
    search runs over ``[e_(theta_), e^(theta_bar)]``. When ``h_alpha`` is
    quasiconcave the optimum is located by bisection on the sign of the
    one-sided derivatives; otherwise a grid scan seeds bounded golden-section
    refinements. ``tie_break`` picks the smallest or largest optimal
    threshold when welfare is flat at the top.
    """
    _check_alpha(alpha)
    if tie_break not in ("smallest", "largest"):
        raise ValueError("tie_break must be 'smallest' or 'largest'")
    c = as_canonical(instance)
    notes: list[str] = []
    if c.is_degenerate:
        e = float(c.peak(c.type_lower))
        return ScalarizedPoint(alpha, e, welfare(c, e, alpha), float("nan"), float("nan"),
                               foc_case(c, e), "closed-form", ("single-type economy",))
    lo, hi = _search_interval(c)
    if alpha == 0.0 or hi <= lo:
        e_opt, method = hi, "closed-form"
        if alpha == 0.0:
            notes.append("alpha=0: every threshold in [e^(theta_bar), cap] is optimal; reporting e^(theta_bar)")
    else:
        from .certify import quasiconcavity_check

        grid_e = np.linspace(lo, hi, grid)
        values = welfare_grid(c, grid_e, alpha)
        qc = quasiconcavity_check(c, alpha)["quasiconcave"]
        e_opt, method = None, "derivative"
        if qc:
            cand = _snap(c, _derivative_search(c, alpha, lo, hi, tie_break))
            if welfare(c, cand, alpha) >= values.max() - 1e-9:
                e_opt = cand
            else:
                log.debug("derivative search fell short of the grid maximum at alpha=%g", alpha)
        if e_opt is None:
            method = "multistart"
            e_raw, others = _multistart(c, alpha, grid_e, values, tie_break)
            e_opt = _snap(c, e_raw)
            if others:
                msg = f"welfare has {len(others) + 1} separated local maxima at alpha={alpha:g}"
                notes.append(msg)
                warnings.warn(msg, MultimodalWarning, stacklevel=2)
    e_opt = float(e_opt)
    left = _safe_derivative(c, e_opt, alpha, "left")
    right = _safe_derivative(c, e_opt, alpha, "right")
    return ScalarizedPoint(alpha, e_opt, welfare(c, e_opt, alpha), left, right, foc_case(c, e_opt),
                           method, tuple(notes))


def alpha_for_threshold(instance, e_star: float, e1: float | None = None) -> float:
    """A weight under which ``e_star`` is an optimal threshold.

    The right derivative is affine in the weight, ``k * alpha + b``, so the
    supporting weight is its root. At the kink the supporting weights form an
    interval bounded by the roots of the left and right derivatives; its
    midpoint is returned.
    """
    c = as_canonical(instance)
    lo, hi = _search_interval(c)
    if e_star >= hi - SNAP_TOL:
        return 0.0
    if e1 is None:
        e1 = optimize_threshold(c, 1.0).e_star
    if e_star < e1 - SNAP_TOL:
        raise ValueError(f"threshold {e_star} lies below the alpha=1 optimum {e1}; no supporting weight exists")

    def root(side):
        b = welfare_derivative(c, e_star, 0.0, side)
        k = welfare_derivative(c, e_star, 1.0, side) - b
        if k >= 0.0:
            return 1.0 if b <= 0.0 else 0.0
        return float(np.clip(-b / k, 0.0, 1.0))

    if foc_case(c, e_star) is FocCase.AT_KINK:
        a_right, a_left = root("right"), root("left")
        return 0.5 * (min(a_right, a_left) + max(a_right, a_left))
    return root("right")
