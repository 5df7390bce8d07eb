"""Exact no-barrier starting value.

With interest force r > 0 the no-barrier penalty function at zero surplus has
the closed integral representation

    phi0 = (lam * mu_A / kappa) * int_0^inf a1(r v) * v^(alpha/r)
                                  * exp(-c v + I(v)) dv,
    kappa = c * int_0^inf v^(alpha/r) * exp(-c v + I(v)) dv,
    I(v)  = int_0^v lam * mean * f1(r s) ds,

where f1 is the equilibrium-distribution transform of the claim law and a1
the normalized transform of the penalty term A.  For combination-of-Erlang
claims the inner integral I(v) reduces to logarithm/rational terms and is
evaluated exactly; the outer integrals use the panel-doubling semi-infinite
rule.  The classical r=0, alpha=0 value lam*mu_A/c is provided separately as
an oracle and as the seed for r=0 solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .quadrature import integrate_semi_infinite
from .risk_model import CUSTOM, PenaltyCase, RiskModel, _penalty_poly, a1_laplace, mu_A

_OUTER_TOL = 1e-12
_EXP_OVERFLOW = 700.0
_INNER_GRID_POINTS = 257
_INNER_GRID_SPAN = 64.0


@dataclass(frozen=True)
class InitialValueResult:
    """phi0 with its normalizing constant and the inner-integral table I(v)."""

    phi0: float
    kappa: float
    inner_grid: tuple  # (v values, I(v) values), diagnostic


def _inner_cumulative(model: RiskModel):
    """Closed form of I(v) = int_0^v lam*mean*f1(r s) ds, vectorized in v.

    Termwise over the claim law: the order-0 piece integrates to
    log1p(r v / rate)/r and order m >= 1 to (1 - (rate/(rate+r v))^m)/(r m).
    """
    lam, r = model.lam, model.r
    terms = model.claim.terms

    def inner(v):
        v = np.asarray(v, dtype=float)
        total = np.zeros_like(v)
        for a, k, rate in terms:
            acc = np.log1p(r * v / rate) / r
            ratio = rate / (rate + r * v)
            power = np.ones_like(v)
            for m in range(1, k):
                power = power * ratio
                acc = acc + (1.0 - power) / (r * m)
            total = total + a * acc
        return lam * total

    return inner


def _outer_exponent(model: RiskModel):
    inner = _inner_cumulative(model)
    c, alpha, r = model.c, model.alpha, model.r
    power = alpha / r

    def exponent(v: float) -> float:
        ex = -c * v + inner(v)
        if power > 0.0:
            ex += power * np.log(v) if v > 0 else -np.inf
        if ex > _EXP_OVERFLOW:
            raise DivergenceError(
                "initial-value integrand overflows; the model has too little "
                "premium loading for its interest/discount forces"
            )
        return ex

    return exponent


def _require_positive_interest(model: RiskModel) -> None:
    if not model.r > 0:
        raise ValueError(
            "the exact initial-value integrals require interest force r > 0; "
            "use classical_zero_value for r = 0 with alpha = 0"
        )


def kappa(model: RiskModel, tol: float = _OUTER_TOL) -> float:
    """Normalizing constant of the initial-value representation."""
    _require_positive_interest(model)
    exponent = _outer_exponent(model)
    return model.c * integrate_semi_infinite(lambda v: np.exp(exponent(v)), tol)


def phi_infinity_at_zero(model: RiskModel, case: PenaltyCase, tol: float = _OUTER_TOL) -> float:
    """No-barrier penalty value at zero initial surplus, r > 0."""
    _require_positive_interest(model)
    m_A = mu_A(model, case)
    if m_A == 0.0:
        return 0.0
    exponent = _outer_exponent(model)

    if case.kind == CUSTOM:
        a1 = lambda s: a1_laplace(model, case, s)
    else:
        # bind the closed-form transform once; the outer rule calls it often
        poly = _penalty_poly(model.claim, case)
        a1 = lambda s: poly.laplace(s) / m_A

    r = model.r
    numerator = integrate_semi_infinite(lambda v: a1(r * v) * np.exp(exponent(v)), tol)
    return model.lam * m_A * numerator / kappa(model, tol)


def classical_zero_value(model: RiskModel, case: PenaltyCase) -> float:
    """r = 0, alpha = 0 starting value lam*mu_A/c (needs positive loading)."""
    if model.r != 0 or model.alpha != 0:
        raise ValueError("classical_zero_value applies only to r = 0, alpha = 0")
    if model.safety_loading <= 0:
        raise ValueError(
            f"classical starting value needs c > lam*mean, got loading {model.safety_loading:g}"
        )
    return model.lam * mu_A(model, case) / model.c


def compute_initial_value(
    model: RiskModel, case: PenaltyCase, tol: float = _OUTER_TOL
) -> InitialValueResult:
    """phi0 and kappa packaged with the diagnostic inner-integral table."""
    k = kappa(model, tol)
    phi0 = phi_infinity_at_zero(model, case, tol)
    v_grid = np.linspace(0.0, _INNER_GRID_SPAN, _INNER_GRID_POINTS)
    inner = _inner_cumulative(model)(v_grid)
    return InitialValueResult(phi0=phi0, kappa=k, inner_grid=(v_grid, inner))
