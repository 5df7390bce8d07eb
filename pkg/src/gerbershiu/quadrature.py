"""Gauss-Legendre quadrature.

Nodes and weights on [-1, 1] are found by Newton iteration on the degree-n
Legendre polynomial, starting from the Chebyshev-angle guesses
x_i = cos(pi*(i - 1/4)/(n + 1/2)).  On top of the basic rule sit an
affine-mapped integrator, a composite (equal panels) integrator, and a
semi-infinite integrator that sums panels [0,1], [1,2], [2,4], [4,8], ...
until a panel's contribution is negligible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError, NumericError

MAX_NODES = 128

_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1]."""

    n: int
    nodes: np.ndarray
    weights: np.ndarray


def _legendre_and_derivative(n: int, x: np.ndarray):
    """P_n(x) and P_n'(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    # P_n'(x) = n*(P_{n-1}(x) - x*P_n(x)) / (1 - x^2)
    dp = n * (p_prev - x * p) / (1.0 - x * x)
    return p, dp


def gauss_legendre(n: int) -> QuadratureRule:
    """Return the n-point Gauss-Legendre rule on [-1, 1], 1 <= n <= 128."""
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_NODES:
        raise ValueError(f"node count must be an integer in [1, {MAX_NODES}], got {n!r}")
    n = int(n)
    if n == 1:
        return QuadratureRule(1, np.array([0.0]), np.array([2.0]))

    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(_NEWTON_MAX_ITER):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x -= dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    else:
        raise NumericError(f"Legendre root search did not converge for n={n}")
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return QuadratureRule(n, x[order], w[order])


def _apply(rule: QuadratureRule, f: Callable[[float], float], a: float, b: float) -> float:
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    total = 0.0
    for xi, wi in zip(rule.nodes, rule.weights):
        x = mid + half * xi
        v = f(x)
        if not np.isfinite(v):
            raise NumericError(f"integrand returned non-finite value {v!r} at x={x!r}")
        total += wi * v
    return half * total


def integrate(f: Callable[[float], float], a: float, b: float, n: int = 32) -> float:
    """Approximate the integral of f over [a, b] with an n-point rule."""
    if not a <= b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    return _apply(gauss_legendre(n), f, a, b)


def integrate_composite(
    f: Callable[[float], float], a: float, b: float, panels: int, n: int = 32
) -> float:
    """Split [a, b] into equal panels and sum n-point rule approximations."""
    if panels < 1:
        raise ValueError(f"panels must be positive, got {panels}")
    if not a <= b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    rule = gauss_legendre(n)
    edges = np.linspace(a, b, panels + 1)
    return sum(_apply(rule, f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))


_SEMI_INF_MAX_PANELS = 60
_SEMI_INF_NODES = 32


def integrate_semi_infinite(f: Callable[[float], float], tol: float) -> float:
    """Integrate f over [0, inf) by panel doubling.

    Panels are [0,1], [1,2], [2,4], [4,8], ...; accumulation stops once a
    panel's absolute contribution drops below tol*(accumulated |sum| + tol).
    The caller guarantees decay fast enough for this to terminate.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    rule = gauss_legendre(_SEMI_INF_NODES)
    total = 0.0
    abs_total = 0.0
    lo, hi = 0.0, 1.0
    part = 0.0
    for _ in range(_SEMI_INF_MAX_PANELS):
        part = _apply(rule, f, lo, hi)
        total += part
        abs_total += abs(part)
        if abs(part) < tol * (abs_total + tol):
            return total
        lo, hi = hi, 2.0 * hi
    raise DivergenceError(
        f"semi-infinite integral did not settle within {_SEMI_INF_MAX_PANELS} panels "
        f"(last panel ending at {lo:g} contributed {part:g})"
    )
