"""Fixed-order Gauss-Legendre rules for piecewise-smooth integrands."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

QUAD_NODES = 32


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def nodes_on(a: float, b: float, n: int = QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def split_points(a: float, b: float, breaks: Iterable[float] = ()) -> list[float]:
    inner = sorted(t for t in breaks if a < t < b)
    return [a, *inner, b]


def integrate(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              breaks: Iterable[float] = (), n: int = QUAD_NODES) -> float:
    """Integrate ``fn`` over [a, b], one rule per smooth piece."""
    if b <= a:
        return 0.0
    pts = split_points(a, b, breaks)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            x, w = nodes_on(lo, hi, n)
            total += float(np.dot(w, fn(x)))
    return total
