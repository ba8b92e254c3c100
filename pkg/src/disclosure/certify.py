"""Lagrangian optimality certificates for threshold policies, plus shape checks.

The certificate uses two cumulative multipliers on the type space: ``Lambda``
for the envelope (incentive) constraint and ``Psi`` for participation. Their
monotonicity, the ``Q``-function conditions and complementary slackness
together certify that a threshold is optimal among all policies.

Stieltjes integrals against the multipliers are taken on an extended grid in
which every breakpoint is sampled as a left limit and as a value (the lower
end also as a right limit), so atoms are captured exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import CanonicalInstance, as_canonical
from .quadrature import QUAD_NODES, gauss_legendre
from .threshold import boundaries, foc_residual, threshold_scheme, welfare_derivative

CERT_GRID = 801
SHAPE_GRID = 801
PEAK_GRID = 401
MONO_TOL = 1e-8
Q_TOL = 1e-7
SLACK_TOL = 1e-6
FOC_TOL = 1e-6
SHAPE_TOL = 1e-10
PI_E_ZERO = 1e-12


class CertificateError(ValueError):
    """Raised when a candidate threshold fails the first-order precondition."""


def h_alpha(c: CanonicalInstance, alpha: float, theta):
    return (1.0 - alpha) * c.density.cdf(theta) + alpha * c.density.pdf(theta)


def quasiconcavity_check(instance, alpha: float, grid: int = SHAPE_GRID, tol: float = SHAPE_TOL) -> dict[str, Any]:
    """Whether ``h_alpha`` rises then falls on a grid, and where it peaks."""
    c = as_canonical(instance)
    if c.is_degenerate:
        t = c.type_lower
        return {"alpha": alpha, "quasiconcave": True, "strict": True, "peak_set": [t, t], "violation": None}
    theta = c.type_grid(grid)
    h = h_alpha(c, alpha, theta)
    d = np.diff(h)
    sign = np.where(d > tol, 1, np.where(d < -tol, -1, 0))
    falls = np.flatnonzero(sign < 0)
    rise_after = np.flatnonzero(sign > 0)
    violation = None
    ok = True
    if falls.size and rise_after.size and rise_after[-1] > falls[0]:
        ok = False
        bad = rise_after[rise_after > falls[0]][0]
        violation = float(theta[bad])
    top = h.max()
    idx = np.flatnonzero(h >= top - tol)
    return {
        "alpha": float(alpha),
        "quasiconcave": ok,
        "strict": bool(ok and not np.any(sign == 0)),
        "peak_set": [float(theta[idx[0]]), float(theta[idx[-1]])],
        "violation": violation,
    }


def log_concavity_check(instance, grid: int = PEAK_GRID, tol: float = 1e-8) -> dict[str, Any]:
    """Sign of ``(ln f)''`` over the interior of the support."""
    c = as_canonical(instance)
    dens = c.density
    if c.is_degenerate:
        return {"log_concave": True, "strict": False, "max_curvature": 0.0, "method": "degenerate", "location": None}
    h = (c.type_upper - c.type_lower) / 400.0
    theta = np.linspace(c.type_lower + h, c.type_upper - h, grid)
    with np.errstate(invalid="ignore"):
        curv = np.asarray(dens.d2logpdf(theta), dtype=float)
    curv = np.where(np.isnan(curv), -np.inf, curv)
    i = int(np.argmax(curv))
    mx = float(curv[i])
    return {
        "log_concave": bool(mx <= tol),
        "strict": bool(mx < -tol),
        "max_curvature": mx,
        "method": "analytic" if dens.analytic_log_curvature else "central-difference",
        "location": float(theta[i]),
    }


@dataclass(frozen=True)
class Certificate:
    alpha: float
    e_star: float
    theta_hat: float
    theta_star: float
    A: float
    theta: np.ndarray  # extended grid, see _extended_grid
    kind: np.ndarray  # 0 left limit, 1 value, 2 right limit
    sampled_Lambda: np.ndarray
    sampled_Psi: np.ndarray
    sampled_Lambda1: np.ndarray
    sampled_Lambda2: np.ndarray
    q_theta: np.ndarray
    sampled_Q: np.ndarray
    mid_pi_e: np.ndarray  # pi_e(t, e(t)) on each grid increment
    mid_ir_gap: np.ndarray  # pi(t, e(t)) - pi(t, cap)
    mid_ic_gap: np.ndarray  # int_t^top e + pi(t, e(t)) - pi(top, e(top))
    e_hat_side: float  # e(theta_hat)
    e_top: float  # e(theta_bar)
    pi_e_top: float
    top_type: float
    f_star: float
    star_at_top: bool
    notes: tuple[str, ...] = field(default=())


def _lambda(c, alpha, th, ts, A, theta, side="value"):
    """Lambda at ``theta``; ``side`` selects the left limit, the value or the right limit."""
    f = c.density.pdf(theta)
    F = c.density.cdf(theta)
    h_star = float(h_alpha(c, alpha, ts))
    f_star = float(c.density.pdf(ts))
    lo, hi = c.type_lower, c.type_upper
    if side == "left":
        out = np.where(theta <= th, alpha * f,
                       np.where(theta <= ts, h_star - (1 - alpha) * F, alpha * f))
        return np.where(theta <= lo, 0.0, out)
    out = np.where(theta < th, alpha * f,
                   np.where(theta < ts, h_star - (1 - alpha) * F, alpha * f))
    if side == "right":
        return out
    out = np.where(theta >= hi, alpha * f_star - A, out)
    return np.where(theta <= lo, 0.0, out)


def _psi(c, alpha, ts, A, theta, side="value"):
    h_star = float(h_alpha(c, alpha, ts))
    hi = c.type_upper
    body = h_star - h_alpha(c, alpha, theta)
    if side == "left":
        return np.where(theta <= ts, 0.0, body)
    out = np.where(theta < ts, 0.0, body)
    if side == "right":
        return out
    return np.where(theta >= hi, (1 - alpha) * (float(c.density.cdf(ts)) - 1.0) + A, out)


_SIDES = ("left", "value", "right")


def _extended_grid(c, th, ts, n):
    """Sorted samples; breakpoints get a left limit, the lower end also a right limit."""
    lo, hi = c.type_lower, c.type_upper
    special = [lo, th, ts, hi]
    base = np.unique(np.concatenate([np.linspace(lo, hi, n), special,
                                     [b for b in c.density.breakpoints if lo < b < hi]]))
    theta, kind = [], []
    for t in base:
        sides = [1]
        if any(t == s for s in special):
            sides = [0, 1]
        if t == lo:
            sides = [0, 1, 2]
        theta.extend([t] * len(sides))
        kind.extend(sides)
    return base, np.array(theta), np.array(kind)


def _sample(fn, theta, kind):
    out = np.empty_like(theta)
    for k, side in enumerate(_SIDES):
        m = kind == k
        if np.any(m):
            out[m] = fn(theta[m], side)
    return out


def _interval_integrals(fn, knots, n=QUAD_NODES):
    """Integrals of ``fn`` over each ``[knots[i], knots[i+1]]`` (vectorised)."""
    x, w = gauss_legendre(n)
    a, b = knots[:-1, None], knots[1:, None]
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * x[None, :]
    return np.sum(fn(nodes) * w[None, :] * half, axis=1)


def build_certificate(instance, alpha: float, e_star: float, grid: int = CERT_GRID,
                      foc_tol: float = FOC_TOL) -> Certificate:
    """Multipliers and ``Q`` for a candidate optimal threshold."""
    c = as_canonical(instance)
    if c.is_degenerate:
        raise CertificateError("certificates need a continuum of types")
    notes = []
    e_top_peak = c.peak_range[1]
    if e_star > e_top_peak:
        notes.append(f"threshold {e_star:g} induces the same scheme as {e_top_peak:g}; using the latter")
        e_star = e_top_peak
    case, res = foc_residual(c, e_star, alpha)
    if abs(res) > foc_tol:
        raise CertificateError(f"threshold {e_star:g} fails the first-order condition at alpha={alpha:g} "
                               f"(case {case.value}, residual {res:.3g})")
    b = boundaries(c, e_star)
    th, ts = b.theta_hat, b.theta_star
    hi = c.type_upper
    dens = c.density
    pe_star = float(c.profit_e(ts, e_star))
    if abs(pe_star) > PI_E_ZERO:
        from .threshold import _bunching_integral

        A = -_bunching_integral(c, b, alpha) / pe_star
    else:
        A = 0.0
    scheme = threshold_scheme(c, e_star)

    base, theta, kind = _extended_grid(c, th, ts, grid)
    lam = _sample(lambda x, side: _lambda(c, alpha, th, ts, A, x, side), theta, kind)
    psi = _sample(lambda x, side: _psi(c, alpha, ts, A, x, side), theta, kind)
    F = dens.cdf(theta)
    lam1 = (1 - alpha) * F + lam + psi
    lam2 = (1 - alpha) * F + psi

    # integrand value for each increment: the atom's own point, or an interior midpoint
    t0, t1 = theta[:-1], theta[1:]
    t_mid = np.where(t1 > t0, 0.5 * (t0 + t1), t1)
    e_mid = scheme.emission(c, t_mid)
    mid_pi_e = c.profit_e(t_mid, e_mid)
    mid_ir = c.profit(t_mid, e_mid) - c.profit(t_mid, c.emission_cap)

    # tail integrals of the emission scheme, exact per smooth piece
    e_piece = _interval_integrals(lambda x: scheme.emission(c, x.ravel()).reshape(x.shape), base)
    tail_e = np.concatenate([np.cumsum(e_piece[::-1])[::-1], [0.0]])
    e_top = float(scheme.emission(c, hi)[0])
    top_profit = float(c.profit(hi, e_top))
    # midpoint of each base interval needs half an interval's integral
    k = np.searchsorted(base, t_mid, side="left")
    k = np.clip(k, 0, base.size - 1)
    ic_tail = np.empty_like(t_mid)
    exact = base[k] == t_mid
    ic_tail[exact] = tail_e[k[exact]]
    inner = ~exact
    if np.any(inner):
        right = base[k[inner]]
        part = _interval_integrals(lambda x: scheme.emission(c, x.ravel()).reshape(x.shape),
                                   np.stack([t_mid[inner], right], axis=0).T.ravel())[::2]
        ic_tail[inner] = part + tail_e[k[inner]]
    mid_ic = ic_tail + c.profit(t_mid, e_mid) - top_profit

    # Q on [theta_hat, theta_bar]
    lam_minus_f = _interval_integrals(
        lambda x: _lambda(c, alpha, th, ts, A, x) - alpha * dens.pdf(x), base)
    tail_leb = np.concatenate([np.cumsum(lam_minus_f[::-1])[::-1], [0.0]])
    incr = mid_pi_e * np.diff(lam1)
    # Stieltjes tail over [theta, top]: sum increments from the left-limit sample of theta on
    tail_st = np.concatenate([np.cumsum(incr[::-1])[::-1], [0.0]])
    q_theta, q_vals = [], []
    for j, t in enumerate(theta):
        if t < th:
            continue
        # closed interval: start from the first sample at theta (its left limit)
        if j > 0 and theta[j - 1] == t:
            continue
        leb = tail_leb[int(np.searchsorted(base, t))]
        q_theta.append(t)
        q_vals.append(leb + tail_st[j])

    return Certificate(
        alpha=float(alpha), e_star=float(e_star), theta_hat=th, theta_star=ts, A=float(A),
        theta=theta, kind=kind, sampled_Lambda=lam, sampled_Psi=psi,
        sampled_Lambda1=lam1, sampled_Lambda2=lam2,
        q_theta=np.array(q_theta), sampled_Q=np.array(q_vals),
        mid_pi_e=mid_pi_e, mid_ir_gap=mid_ir, mid_ic_gap=mid_ic,
        e_hat_side=float(scheme.emission(c, th)[0]), e_top=e_top,
        pi_e_top=float(c.profit_e(hi, e_top)), top_type=hi,
        f_star=float(dens.pdf(ts)), star_at_top=bool(ts >= hi), notes=tuple(notes),
    )


def _item(name, ok, viol, loc=None):
    return {"name": name, "pass": bool(ok), "max_violation": float(viol),
            "location": None if loc is None else float(loc)}


def _monotone(name, theta, values, tol):
    d = np.diff(values)
    i = int(np.argmin(d)) if d.size else 0
    worst = float(max(0.0, -d[i])) if d.size else 0.0
    return _item(name, worst <= tol, worst, theta[i + 1] if d.size else None)


def verify_certificate(cert: Certificate, mono_tol: float = MONO_TOL, q_tol: float = Q_TOL,
                       slack_tol: float = SLACK_TOL) -> dict[str, Any]:
    """Check every condition of the certificate; never raises."""
    th = cert.theta
    items = [
        _monotone("Psi_monotone", th, cert.sampled_Psi, mono_tol),
        _monotone("Lambda1_monotone", th, cert.sampled_Lambda1, mono_tol),
        _monotone("Lambda2_monotone", th, cert.sampled_Lambda2, mono_tol),
    ]
    hat = np.flatnonzero(th == cert.theta_hat)
    jump = float(cert.sampled_Lambda1[hat[-1]] - cert.sampled_Lambda1[hat[0]]) if hat.size > 1 else 0.0
    items.append(_item("Lambda1_jump_at_theta_hat", jump >= -mono_tol, max(0.0, -jump), cert.theta_hat))

    af = cert.alpha * cert.f_star
    if cert.star_at_top:
        viol = max(0.0, -cert.A, cert.A - af)
        items.append(_item("A_in_range", viol <= mono_tol * max(1.0, af), viol, cert.theta_star))
    else:
        viol = abs(cert.A - af)
        items.append(_item("A_in_range", viol <= 1e-6 * max(1.0, af), viol, cert.theta_star))

    qt, qv = cert.q_theta, cert.sampled_Q
    i_star = int(np.argmin(np.abs(qt - cert.theta_star)))
    items.append(_item("Q_theta_star_zero", abs(qv[i_star]) <= q_tol, abs(qv[i_star]), qt[i_star]))
    lam_top = float(cert.sampled_Lambda[-1])
    lhs = qv[0] * cert.e_hat_side
    rhs = lam_top * cert.pi_e_top * cert.e_top
    items.append(_item("Q_theta_hat_identity", abs(lhs - rhs) <= q_tol, abs(lhs - rhs), qt[0]))
    excess = qv - qv[0]
    k = int(np.argmax(excess))
    items.append(_item("Q_theta_hat_maximal", excess[k] <= q_tol, max(0.0, excess[k]), qt[k]))

    ir = float(np.sum(cert.mid_ir_gap * np.diff(cert.sampled_Psi)))
    items.append(_item("IR_slackness", abs(ir) <= slack_tol, abs(ir)))
    ic = float(np.sum(cert.mid_ic_gap * np.diff(cert.sampled_Lambda)))
    items.append(_item("IC_envelope_slackness", abs(ic) <= slack_tol, abs(ic)))
    return {
        "alpha": cert.alpha,
        "e_star": cert.e_star,
        "theta_hat": cert.theta_hat,
        "theta_star": cert.theta_star,
        "A": cert.A,
        "conditions": items,
        "all_pass": all(i["pass"] for i in items),
        "notes": list(cert.notes),
    }


def peak_checks(instance, alpha: float, e_star: float, grid: int = PEAK_GRID, tol: float = 1e-8) -> dict[str, Any]:
    """Location of the bunching interval relative to the peak of ``h_alpha``."""
    c = as_canonical(instance)
    b = boundaries(c, e_star)
    qc = quasiconcavity_check(c, alpha, grid)
    p_lo, p_hi = qc["peak_set"]
    step = (c.type_upper - c.type_lower) / (grid - 1)
    hits = b.theta_hat <= p_hi + step and b.theta_star >= p_lo - step
    items = [_item("peak_range", hits, 0.0 if hits else min(abs(b.theta_hat - p_hi), abs(b.theta_star - p_lo)))]
    pk_lo, pk_hi = c.peak_range
    kink = c.floor_range[1]
    if pk_lo < e_star < pk_hi:
        h_star = float(h_alpha(c, alpha, b.theta_star))
        h_hat = float(h_alpha(c, alpha, b.theta_hat))
        af = alpha * float(c.density.pdf(b.theta_star))
        for side, ind in (("left", e_star > kink + 1e-9), ("right", e_star >= kink - 1e-9)):
            try:
                d = welfare_derivative(c, e_star, alpha, side)
            except ValueError:
                continue
            if abs(d) <= 1e-9:
                gap = h_hat + af * ind - h_star
                items.append(_item(f"peak_boundary_{side}", gap <= tol, max(0.0, gap), b.theta_star))
    return {"alpha": alpha, "e_star": e_star, "peak_set": [p_lo, p_hi], "conditions": items,
            "all_pass": all(i["pass"] for i in items)}
