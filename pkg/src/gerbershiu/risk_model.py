"""Risk model primitives.

The surplus process is compound Poisson with premium rate c, claim intensity
lam, credit interest force r, and discount force alpha.  Claim sizes follow a
signed combination of Erlang densities,

    f(x) = sum_j a_j * rate_j^k_j * x^(k_j-1) * exp(-rate_j*x) / (k_j-1)!,

with total mass 1.  Every derived quantity the solvers need -- tail, iterated
tail, Laplace transforms, the penalty term A(u) of the first ruin-causing
claim, and its normalized transform -- stays inside the family

    g(x) = sum_j exp(-rate_j*x) * sum_m c[j,m] * (rate_j*x)^m / m!,

which is closed under tail integration, multiplication by x, and Laplace
transforms.  `_ExpPoly` implements that family; everything else is thin.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from . import quadrature
from .errors import DivergenceError

_MASS_TOL = 1e-12
_DENSITY_GRID_POINTS = 1024
_DENSITY_GRID_SPAN = 20.0  # multiples of the mean
TAIL_TRUNCATION_SPAN = 50.0  # multiples of the mean, for numeric claim integrals


class _ExpPoly:
    """sum_j exp(-b_j*x) * sum_m c[j,m]*(b_j*x)^m/m! with closed-form calculus."""

    __slots__ = ("rates", "coefs")

    def __init__(self, rates: np.ndarray, coefs: np.ndarray):
        self.rates = np.asarray(rates, dtype=float)  # (J,)
        self.coefs = np.asarray(coefs, dtype=float)  # (J, K)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for rate, row in zip(self.rates, self.coefs):
            t = rate * x
            term = np.ones_like(x)
            acc = row[0] * term
            for m in range(1, len(row)):
                term = term * t / m
                acc = acc + row[m] * term
            out = out + np.exp(-t) * acc
        return out

    def tail_integral(self) -> "_ExpPoly":
        """ExpPoly of x -> integral over [x, inf) of self."""
        # int_x^inf e^{-bt}(bt)^m/m! dt = (1/b) sum_{p<=m} e^{-bx}(bx)^p/p!
        new = np.cumsum(self.coefs[:, ::-1], axis=1)[:, ::-1] / self.rates[:, None]
        return _ExpPoly(self.rates, new)

    def times_x(self) -> "_ExpPoly":
        """ExpPoly of x -> x*self(x)."""
        # x*e^{-bx}(bx)^m/m! = ((m+1)/b) * e^{-bx}(bx)^{m+1}/(m+1)!
        J, K = self.coefs.shape
        new = np.zeros((J, K + 1))
        mult = np.arange(1, K + 1) / self.rates[:, None]
        new[:, 1:] = self.coefs * mult
        return _ExpPoly(self.rates, new)

    def laplace(self, s):
        """Laplace transform: integral over [0, inf) of e^{-sx}*self(x)."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for rate, row in zip(self.rates, self.coefs):
            ratio = rate / (rate + s)
            term = ratio / rate  # b^m/(b+s)^{m+1} at m=0
            acc = row[0] * term
            for m in range(1, len(row)):
                term = term * ratio
                acc = acc + row[m] * term
            out = out + acc
        return out

    def __add__(self, other: "_ExpPoly") -> "_ExpPoly":
        if not np.array_equal(self.rates, other.rates):
            raise ValueError("can only add ExpPolys over the same rate set")
        K = max(self.coefs.shape[1], other.coefs.shape[1])
        a = np.zeros((len(self.rates), K))
        a[:, : self.coefs.shape[1]] = self.coefs
        a[:, : other.coefs.shape[1]] += other.coefs
        return _ExpPoly(self.rates, a)


@dataclass(frozen=True)
class ClaimDistribution:
    """Signed combination of Erlangs: terms of (coefficient, shape, rate).

    Coefficients may be negative (combination-of-exponentials densities) but
    must sum to 1, and the resulting density must be nonnegative, which is
    checked on a 1024-point grid over [0, 20*mean].
    """

    terms: tuple

    def __post_init__(self):
        norm = []
        for term in self.terms:
            try:
                a, k, rate = term
            except (TypeError, ValueError):
                raise ValueError(f"claim term must be (coef, shape, rate), got {term!r}")
            if int(k) != k or int(k) < 1:
                raise ValueError(f"Erlang shape must be a positive integer, got {k!r}")
            if not rate > 0:
                raise ValueError(f"Erlang rate must be positive, got {rate!r}")
            norm.append((float(a), int(k), float(rate)))
        if not norm:
            raise ValueError("claim distribution needs at least one term")
        object.__setattr__(self, "terms", tuple(norm))

        mass = math.fsum(a for a, _, _ in self.terms)
        if abs(mass - 1.0) > _MASS_TOL:
            raise ValueError(f"claim density coefficients sum to {mass!r}, expected 1")
        if self.mean <= 0 or not math.isfinite(self.mean):
            raise ValueError(f"claim mean must be positive and finite, got {self.mean!r}")
        grid = np.linspace(0.0, _DENSITY_GRID_SPAN * self.mean, _DENSITY_GRID_POINTS)
        vals = self._density_poly(grid)
        floor = -1e-12 * max(1.0, float(np.max(np.abs(vals))))
        if np.any(vals < floor):
            bad = grid[int(np.argmin(vals))]
            raise ValueError(f"claim density is negative near x={bad:.6g}")

    # -- factories ---------------------------------------------------------
    @classmethod
    def exponential(cls, rate: float) -> "ClaimDistribution":
        return cls(((1.0, 1, rate),))

    @classmethod
    def erlang(cls, shape: int, rate: float) -> "ClaimDistribution":
        return cls(((1.0, shape, rate),))

    # -- closed-form building blocks ----------------------------------------
    @cached_property
    def _density_poly(self) -> _ExpPoly:
        rates = np.array([rate for _, _, rate in self.terms])
        K = max(k for _, k, _ in self.terms)
        coefs = np.zeros((len(self.terms), K))
        for j, (a, k, rate) in enumerate(self.terms):
            coefs[j, k - 1] = a * rate
        return _ExpPoly(rates, coefs)

    @cached_property
    def _survival_poly(self) -> _ExpPoly:
        rates = np.array([rate for _, _, rate in self.terms])
        K = max(k for _, k, _ in self.terms)
        coefs = np.zeros((len(self.terms), K))
        for j, (a, k, _) in enumerate(self.terms):
            coefs[j, :k] = a
        return _ExpPoly(rates, coefs)

    @cached_property
    def _tail_integral_poly(self) -> _ExpPoly:
        return self._survival_poly.tail_integral()

    # -- moments and transforms ----------------------------------------------
    @cached_property
    def mean(self) -> float:
        return math.fsum(a * k / rate for a, k, rate in self.terms)

    @cached_property
    def second_moment(self) -> float:
        return math.fsum(a * k * (k + 1) / rate**2 for a, k, rate in self.terms)

    def density(self, x):
        """Claim density f(x), x >= 0."""
        x = _require_nonnegative(x, "claim size")
        return self._density_poly(x)

    def survival(self, x):
        """Tail F-bar(x) = 1 - F(x)."""
        x = _require_nonnegative(x, "claim size")
        return self._survival_poly(x)

    def cdf(self, x):
        x = _require_nonnegative(x, "claim size")
        return 1.0 - self._survival_poly(x)

    def integrated_tail(self, x):
        """Integral over [x, inf) of the tail; equals mean at x=0."""
        x = _require_nonnegative(x, "claim size")
        return self._tail_integral_poly(x)

    def laplace(self, s):
        """Transform of the density: sum_j a_j*(rate_j/(rate_j+s))^k_j."""
        s = _require_nonnegative(s, "transform argument")
        out = np.zeros_like(np.asarray(s, dtype=float))
        for a, k, rate in self.terms:
            out = out + a * (rate / (rate + s)) ** k
        return out

    def equilibrium_laplace(self, s):
        """Transform of the equilibrium (integrated-tail) distribution.

        Computed as the Laplace transform of the tail divided by the mean,
        which equals (1 - laplace(s))/(mean*s) without the cancellation at
        small s, and is exactly 1 at s=0.
        """
        s = _require_nonnegative(s, "transform argument")
        return self._survival_poly.laplace(s) / self.mean


def _require_nonnegative(x, what: str):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"{what} must be nonnegative, got {x!r}")
    return arr if arr.ndim else float(arr)


# ---------------------------------------------------------------------------
# Penalty functionals
# ---------------------------------------------------------------------------

RUIN_PROBABILITY = "ruin_probability"
LAPLACE_RUIN_TIME = "laplace_ruin_time"
CLAIM_CAUSING_RUIN = "claim_causing_ruin"
DEFICIT_AT_RUIN = "deficit_at_ruin"
CUSTOM = "custom"

_NAMED_KINDS = (RUIN_PROBABILITY, LAPLACE_RUIN_TIME, CLAIM_CAUSING_RUIN, DEFICIT_AT_RUIN)


@dataclass(frozen=True)
class PenaltyCase:
    """One penalty functional: which w(surplus-before, deficit) is averaged.

    The named kinds carry their conventional weights (1, 1, x+y, y); a custom
    case supplies an arbitrary nonnegative w and falls back to numeric
    integration in all derived quantities.
    """

    kind: str
    w: Optional[Callable[[float, float], float]] = None

    def __post_init__(self):
        if self.kind not in _NAMED_KINDS + (CUSTOM,):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == CUSTOM and self.w is None:
            raise ValueError("custom penalty case requires a weight function")

    @classmethod
    def ruin_probability(cls):
        return cls(RUIN_PROBABILITY)

    @classmethod
    def laplace_ruin_time(cls):
        return cls(LAPLACE_RUIN_TIME)

    @classmethod
    def claim_causing_ruin(cls):
        return cls(CLAIM_CAUSING_RUIN)

    @classmethod
    def deficit_at_ruin(cls):
        return cls(DEFICIT_AT_RUIN)

    @classmethod
    def custom(cls, w: Callable[[float, float], float]):
        return cls(CUSTOM, w)

    def penalty(self, surplus_before, deficit):
        """Evaluate w on (surplus immediately before ruin, deficit at ruin)."""
        if self.kind in (RUIN_PROBABILITY, LAPLACE_RUIN_TIME):
            return np.ones_like(np.asarray(surplus_before, dtype=float))
        if self.kind == CLAIM_CAUSING_RUIN:
            return np.asarray(surplus_before, dtype=float) + deficit
        if self.kind == DEFICIT_AT_RUIN:
            return np.asarray(deficit, dtype=float) + 0.0
        return np.vectorize(self.w, otypes=[float])(surplus_before, deficit)


@dataclass(frozen=True)
class RiskModel:
    """Surplus-process parameters plus the claim-size law.

    c: premium rate (>0), lam: Poisson claim intensity (>0), r: interest
    force (>=0), alpha: discount force (>=0).
    """

    c: float
    lam: float
    r: float
    alpha: float
    claim: ClaimDistribution

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"premium rate c must be positive, got {self.c!r}")
        if not self.lam > 0:
            raise ValueError(f"claim intensity lam must be positive, got {self.lam!r}")
        if not self.r >= 0:
            raise ValueError(f"interest force r must be nonnegative, got {self.r!r}")
        if not self.alpha >= 0:
            raise ValueError(f"discount force alpha must be nonnegative, got {self.alpha!r}")

    @property
    def safety_loading(self) -> float:
        return self.c - self.lam * self.claim.mean


def warn_if_loading_nonpositive(model: RiskModel) -> None:
    """No-barrier, alpha=0 quantities may be infinite without positive loading."""
    if model.alpha == 0.0 and model.safety_loading <= 0:
        warnings.warn(
            f"nonpositive safety loading c - lam*mean = {model.safety_loading:g}: "
            "without a barrier, undiscounted penalty quantities may be infinite",
            RuntimeWarning,
            stacklevel=3,
        )


def _penalty_poly(claim: ClaimDistribution, case: PenaltyCase) -> _ExpPoly:
    """A(u) for a named case as an ExpPoly (never called for custom)."""
    if case.kind in (RUIN_PROBABILITY, LAPLACE_RUIN_TIME):
        return claim._survival_poly
    if case.kind == DEFICIT_AT_RUIN:
        return claim._tail_integral_poly
    if case.kind == CLAIM_CAUSING_RUIN:
        return claim._survival_poly.times_x() + claim._tail_integral_poly
    raise ValueError(f"no closed form for penalty kind {case.kind!r}")


def _penalty_A_numeric(model: RiskModel, case: PenaltyCase, u: float) -> float:
    # A(u) = int_0^inf w(u, z) f(u+z) dz, truncated where the tail is < 1e-20
    hi = TAIL_TRUNCATION_SPAN * model.claim.mean
    f = model.claim.density
    w = case.w
    return quadrature.integrate_composite(lambda z: w(u, z) * f(u + z), 0.0, hi, panels=16, n=32)


def penalty_A(model: RiskModel, case: PenaltyCase, u):
    """Expected penalty of the first ruin-causing claim from pre-claim surplus u.

    Closed form for the named cases: tail for the probability-type weights,
    iterated tail for the deficit, u*tail + iterated tail for the claim
    causing ruin.  Custom weights integrate numerically against the density.
    """
    u = _require_nonnegative(u, "surplus")
    if case.kind == CUSTOM:
        if np.ndim(u) == 0:
            return _penalty_A_numeric(model, case, float(u))
        return np.array([_penalty_A_numeric(model, case, v) for v in u])
    if case.kind in (RUIN_PROBABILITY, LAPLACE_RUIN_TIME):
        return model.claim.survival(u)
    return _penalty_poly(model.claim, case)(u)


def mu_A(model: RiskModel, case: PenaltyCase) -> float:
    """Integral of A over [0, inf): mean, E[X^2]/2, or E[X^2] for named cases."""
    claim = model.claim
    if case.kind in (RUIN_PROBABILITY, LAPLACE_RUIN_TIME):
        return claim.mean
    if case.kind == DEFICIT_AT_RUIN:
        return claim.second_moment / 2.0
    if case.kind == CLAIM_CAUSING_RUIN:
        return claim.second_moment
    value = quadrature.integrate_semi_infinite(
        lambda t: _penalty_A_numeric(model, case, t), tol=1e-10
    )
    if not np.isfinite(value):
        raise DivergenceError("mu_A integral of the custom penalty term diverged")
    return value


def a1_laplace(model: RiskModel, case: PenaltyCase, s):
    """Normalized transform of A: (1/mu_A) * integral of e^{-s x} A(x) dx."""
    s = _require_nonnegative(s, "transform argument")
    if case.kind != CUSTOM:
        return _penalty_poly(model.claim, case).laplace(s) / mu_A(model, case)
    denom = mu_A(model, case)

    def transform(si: float) -> float:
        return quadrature.integrate_semi_infinite(
            lambda x: math.exp(-si * x) * _penalty_A_numeric(model, case, x), tol=1e-10
        )

    if np.ndim(s) == 0:
        return transform(float(s)) / denom
    return np.array([transform(float(si)) for si in s]) / denom


def adjustment_coefficient(model: RiskModel) -> Optional[float]:
    """Lundberg adjustment coefficient R, or None when no positive root exists.

    R solves lam*(M_X(R) - 1) = c*R on (0, min rate), where M_X is the claim
    moment generating function.  Exists only under positive safety loading.
    """
    if model.safety_loading <= 0:
        return None
    rate_min = min(rate for _, _, rate in model.claim.terms)

    def g(R: float) -> float:
        mgf = sum(a * (rate / (rate - R)) ** k for a, k, rate in model.claim.terms)
        return model.lam * (mgf - 1.0) - model.c * R

    # g(0)=0 with g'(0)<0; bracket the positive root by scanning toward rate_min
    hi = None
    for frac in (0.5, 0.75, 0.9, 0.99, 0.999, 0.9999, 0.999999, 1 - 1e-9, 1 - 1e-12):
        R = frac * rate_min
        if g(R) > 0:
            hi = R
            break
    if hi is None:
        return None
    lo = 1e-12 * rate_min
    if g(lo) > 0:  # pathological: root numerically at 0
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * rate_min:
            break
    return 0.5 * (lo + hi)
