"""Classical reference solver.

The no-barrier penalty function solves a Volterra equation of the second
kind,

    phi(u) = c*phi(0)/(c+r*u) - lam/(c+r*u) * int_0^u A(t) dt
             + int_0^u k(u,t) phi(t) dt,
    k(u,t) = (r + alpha + lam*Fbar(u-t)) / (c + r*u),

marched forward on a uniform grid with product-trapezoidal weights.  The
homogeneous companion h solves the same equation with A omitted and h(0)=1.
A dividend barrier at b is handled by the decomposition

    phi_b(u) = phi(u) - (phi'(b)/h'(b)) * h(u),

with both derivatives taken from the integro-differential equation itself
(finite differences are too noisy for the ratio at u=b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import NumericError, StepSizeError
from .risk_model import (
    PenaltyCase,
    RiskModel,
    _penalty_poly,
    mu_A,
    penalty_A,
    warn_if_loading_nonpositive,
)

_RESCALE_THRESHOLD = 1e280


@dataclass(frozen=True)
class SolutionTable:
    """Values (and optionally derivatives) of a solution on an increasing grid.

    Solver-produced tables have u[0]=0 and uniform spacing; network
    evaluations may carry arbitrary increasing grids.  `log_scale` is nonzero
    only for homogeneous-solution tables whose values were rescaled to avoid
    overflow: stored phi equals the true value times exp(-log_scale).
    """

    u: np.ndarray
    phi: np.ndarray
    dphi: Optional[np.ndarray] = None
    log_scale: float = 0.0
    meta: dict = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "phi", phi)
        if u.shape != phi.shape or u.ndim != 1 or len(u) == 0:
            raise ValueError("u and phi must be equal-length 1-D arrays")
        if self.dphi is not None:
            dphi = np.asarray(self.dphi, dtype=float)
            if dphi.shape != u.shape:
                raise ValueError("dphi length must match the grid")
            object.__setattr__(self, "dphi", dphi)
        if len(u) > 1 and np.any(np.diff(u) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(phi)):
            raise ValueError("grid and values must be finite")
        if self.meta is None:
            object.__setattr__(self, "meta", {})

    @property
    def spacing(self) -> float:
        return float(self.u[1] - self.u[0])

    def is_uniform(self, tol: float = 1e-12) -> bool:
        if len(self.u) < 2:
            return True
        h = np.diff(self.u)
        return bool(np.max(np.abs(h - h[0])) <= tol * max(1.0, abs(h[0]))) and self.u[0] == 0.0


def _grid(u_max: float, N: int):
    if N < 16:
        raise ValueError(f"need at least 16 grid intervals, got {N}")
    if not u_max > 0:
        raise ValueError(f"u_max must be positive, got {u_max}")
    return np.linspace(0.0, u_max, N + 1)


def _march(model: RiskModel, u: np.ndarray, phi0: float, inhom: Optional[np.ndarray]):
    """Forward Nystrom marching with product-trapezoid weights.

    inhom is the precomputed term -lam*int_0^{u_j} A(t) dt (None for the
    homogeneous equation).  Returns (values, log_scale).
    """
    c, lam, r, alpha = model.c, model.lam, model.r, model.alpha
    N = len(u) - 1
    h = u[1] - u[0]
    fbar = model.claim.survival(u)  # Fbar((j-i)*h) indexed by j-i
    kw = r + alpha + lam * fbar  # kernel numerators on the difference grid
    phi = np.empty(N + 1)
    phi[0] = phi0
    scale_log = 0.0
    head = phi0  # c*phi(0)/(c+r*u_j) numerator, rescaled along with phi
    for j in range(1, N + 1):
        denom_u = c + r * u[j]
        diag = 1.0 - 0.5 * h * kw[0] / denom_u
        if diag <= 1e-8:
            raise StepSizeError(
                f"marching step h={h:g} too coarse at u={u[j]:g}; increase N"
            )
        conv = 0.5 * kw[j] * phi[0]
        if j > 1:
            conv += float(np.dot(kw[j - 1 : 0 : -1], phi[1:j]))
        rhs = c * head / denom_u + h * conv / denom_u
        if inhom is not None:
            rhs += inhom[j] / denom_u
        phi[j] = rhs / diag
        if inhom is None and abs(phi[j]) > _RESCALE_THRESHOLD:
            phi[: j + 1] /= _RESCALE_THRESHOLD
            head /= _RESCALE_THRESHOLD
            scale_log += math.log(_RESCALE_THRESHOLD)
    return phi, scale_log


def solve_phi_infinity(
    model: RiskModel,
    case: PenaltyCase,
    phi0: float,
    u_max: float = 30.0,
    N: int = 3000,
) -> SolutionTable:
    """No-barrier penalty function on [0, u_max] from its starting value."""
    warn_if_loading_nonpositive(model)
    u = _grid(u_max, N)
    # cumulative integral of A: closed form mu_A - tail for named cases,
    # grid trapezoid for custom (consistent with the scheme's order)
    if case.kind == "custom":
        A = penalty_A(model, case, u)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (A[1:] + A[:-1]) * np.diff(u))))
    else:
        tail = _penalty_poly(model.claim, case).tail_integral()
        cum = mu_A(model, case) - tail(u)
    phi, _ = _march(model, u, phi0, inhom=-model.lam * cum)
    return SolutionTable(u=u, phi=phi)


def solve_h(model: RiskModel, u_max: float = 30.0, N: int = 3000) -> SolutionTable:
    """Homogeneous companion solution with h(0) = 1; positive and increasing."""
    u = _grid(u_max, N)
    phi, scale_log = _march(model, u, 1.0, inhom=None)
    return SolutionTable(u=u, phi=phi, log_scale=scale_log)


def refine(coarse: SolutionTable, fine: SolutionTable) -> SolutionTable:
    """Richardson extrapolation of the second-order scheme.

    `fine` must use the same domain with doubled N; the returned table lives
    on the coarse grid with leading error knocked out ((4*fine - coarse)/3).
    """
    if len(fine.u) != 2 * len(coarse.u) - 1:
        raise ValueError("fine table must halve the coarse spacing")
    if abs(fine.u[-1] - coarse.u[-1]) > 1e-12:
        raise ValueError("tables must share the domain")
    phi = (4.0 * fine.phi[::2] - coarse.phi) / 3.0
    dphi = None
    if coarse.dphi is not None and fine.dphi is not None:
        dphi = (4.0 * fine.dphi[::2] - coarse.dphi) / 3.0
    return SolutionTable(u=coarse.u, phi=phi, dphi=dphi)


def solve_phi_infinity_refined(
    model: RiskModel, case: PenaltyCase, phi0: float, u_max: float = 30.0, N: int = 3000
) -> SolutionTable:
    """Richardson-extrapolated no-barrier solution on the N grid (solves N and 2N)."""
    return refine(
        solve_phi_infinity(model, case, phi0, u_max, N),
        solve_phi_infinity(model, case, phi0, u_max, 2 * N),
    )


def solve_barrier(
    model: RiskModel,
    case: PenaltyCase,
    b: float,
    phi0: float,
    N: int = 3000,
    refined: bool = False,
) -> SolutionTable:
    """Full barrier pipeline: no-barrier solve, companion solve, decomposition."""
    def one(n):
        phi_inf = derivative_from_ide(
            model, case, solve_phi_infinity(model, case, phi0, u_max=b, N=n)
        )
        h = derivative_from_ide(model, None, solve_h(model, u_max=b, N=n))
        return combine_barrier(model, case, b, phi_inf, h)

    if not refined:
        return one(N)
    return refine(one(N), one(2 * N))


def derivative_from_ide(
    model: RiskModel, case: Optional[PenaltyCase], table: SolutionTable
) -> SolutionTable:
    """Fill dphi by evaluating the integro-differential equation on the table.

    phi'(u) = [(alpha+lam)*phi(u) - lam*conv(u) - lam*A(u)] / (r*u + c), with
    the convolution against the claim density taken by product trapezoid on
    the table grid.  Pass case=None for the homogeneous equation (A == 0).
    """
    if not table.is_uniform():
        raise ValueError("IDE differentiation requires a uniform solver grid")
    u, phi = table.u, table.phi
    h = table.spacing if len(u) > 1 else 0.0
    c, lam, r, alpha = model.c, model.lam, model.r, model.alpha
    f = model.claim.density(u)  # f((j-i)*h) indexed by j-i
    N = len(u) - 1
    conv = np.zeros(N + 1)
    for j in range(1, N + 1):
        s = 0.5 * (f[j] * phi[0] + f[0] * phi[j])
        if j > 1:
            s += float(np.dot(f[j - 1 : 0 : -1], phi[1:j]))
        conv[j] = h * s
    A = 0.0 if case is None else np.exp(-table.log_scale) * penalty_A(model, case, u)
    dphi = ((alpha + lam) * phi - lam * conv - lam * A) / (r * u + c)
    return replace(table, dphi=dphi)


def combine_barrier(
    model: RiskModel,
    case: PenaltyCase,
    b: float,
    phi_inf: SolutionTable,
    h: SolutionTable,
) -> SolutionTable:
    """Barrier solution phi_b = phi_inf - (phi_inf'(b)/h'(b)) * h on [0, b].

    Both inputs must share the grid, end exactly at b, and carry IDE
    derivatives.  The returned table's dphi is recomputed from the barrier
    equation, so phi_b'(b) ~ 0 can be checked directly.
    """
    if not np.array_equal(phi_inf.u, h.u):
        raise ValueError("phi_inf and h must share the same grid")
    if abs(phi_inf.u[-1] - b) > 1e-12 * max(1.0, b):
        raise ValueError(f"grid must end at the barrier level b={b:g}")
    if phi_inf.dphi is None or h.dphi is None:
        raise ValueError("both tables need IDE derivatives at b; fill dphi first")
    hprime_b = h.dphi[-1]
    if hprime_b == 0.0:
        raise NumericError("degenerate decomposition: h'(b) = 0")
    coef = phi_inf.dphi[-1] / hprime_b  # scales cancel between h and h'
    combined = SolutionTable(u=phi_inf.u, phi=phi_inf.phi - coef * h.phi)
    return derivative_from_ide(model, case, combined)
