"""Independent simulation oracle for the surplus process.

Between claims the surplus grows deterministically (linearly, or along the
interest curve (x + c/r)e^{rt} - c/r), capped at the barrier when one is
present; claims arrive at exponential times and are drawn by bisection
inversion of the closed-form mixed-Erlang CDF.  Ruin can only happen at a
claim epoch, so detection is exact.  Each path owns a counter-based RNG
stream derived from (seed, path index), making runs reproducible and
order-independent.

Paths far above the Lundberg level 50/R are counted as survivors early (the
remaining ruin probability is below e^{-50}); disable with
SimConfig(early_exit=False) to simulate strictly to the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backends import active as _active_backend
from .risk_model import (
    PenaltyCase,
    RiskModel,
    TAIL_TRUNCATION_SPAN,
    adjustment_coefficient,
)

_CUTOFF_LOG_BOUND = 50.0  # exp(-50) residual ruin probability at the cutoff


@dataclass(frozen=True)
class SimConfig:
    paths: int = 100_000
    horizon: float = 2000.0
    seed: int = 0
    barrier: Optional[float] = None
    early_exit: bool = True

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError(f"need at least one path, got {self.paths}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.barrier is not None and not self.barrier > 0:
            raise ValueError(f"barrier must be positive, got {self.barrier}")


@dataclass(frozen=True)
class PathOutcome:
    ruined: bool
    ruin_time: float
    surplus_before: float
    deficit: float


@dataclass(frozen=True)
class BatchOutcomes:
    """Struct-of-arrays result of a path batch."""

    ruined: np.ndarray
    ruin_time: np.ndarray
    surplus_before: np.ndarray
    deficit: np.ndarray

    def __len__(self):
        return len(self.ruined)


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    std_error: float
    paths: int
    ruined_fraction: float
    horizon: float
    # e^{-alpha*horizon} when alpha > 0; None flags unbounded truncation bias
    horizon_bias_bound: Optional[float]

    def interval(self, sigmas: float = 3.0):
        return (self.value - sigmas * self.std_error, self.value + sigmas * self.std_error)


def _claim_arrays(model: RiskModel):
    coefs = np.array([a for a, _, _ in model.claim.terms])
    shapes = np.array([k for _, k, _ in model.claim.terms], dtype=int)
    rates = np.array([r for _, _, r in model.claim.terms])
    return coefs, shapes, rates


def _cutoff_level(model: RiskModel, config: SimConfig) -> float:
    if not config.early_exit or config.barrier is not None:
        return math.inf
    R = adjustment_coefficient(model)
    return _CUTOFF_LOG_BOUND / R if R else math.inf


def simulate_batch(
    model: RiskModel, u0: float, config: SimConfig, first_path: int = 0
) -> BatchOutcomes:
    """Simulate config.paths paths from initial surplus u0."""
    if u0 < 0:
        raise ValueError(f"initial surplus must be nonnegative, got {u0}")
    if config.barrier is not None and u0 > config.barrier:
        raise ValueError(f"initial surplus {u0} exceeds the barrier {config.barrier}")
    coefs, shapes, rates = _claim_arrays(model)
    ruined, ruin_time, before, deficit = _active_backend.simulate_paths(
        model.c,
        model.lam,
        model.r,
        coefs,
        shapes,
        rates,
        TAIL_TRUNCATION_SPAN * model.claim.mean,
        float(u0),
        config.paths,
        config.horizon,
        config.seed,
        math.nan if config.barrier is None else float(config.barrier),
        _cutoff_level(model, config),
        first_path,
    )
    return BatchOutcomes(
        ruined=np.asarray(ruined, dtype=bool),
        ruin_time=np.asarray(ruin_time),
        surplus_before=np.asarray(before),
        deficit=np.asarray(deficit),
    )


def simulate_path(model: RiskModel, u0: float, config: SimConfig, path_index: int) -> PathOutcome:
    """One path, identical to entry path_index of the batched run."""
    one = SimConfig(
        paths=1,
        horizon=config.horizon,
        seed=config.seed,
        barrier=config.barrier,
        early_exit=config.early_exit,
    )
    out = simulate_batch(model, u0, one, first_path=path_index)
    return PathOutcome(
        ruined=bool(out.ruined[0]),
        ruin_time=float(out.ruin_time[0]),
        surplus_before=float(out.surplus_before[0]),
        deficit=float(out.deficit[0]),
    )


def estimate_from_outcomes(
    model: RiskModel, case: PenaltyCase, outcomes: BatchOutcomes, config: SimConfig
) -> MonteCarloEstimate:
    """Reduce path outcomes to the discounted-penalty estimate and its s.e."""
    n = len(outcomes)
    contrib = np.zeros(n)
    hit = outcomes.ruined
    if np.any(hit):
        w = case.penalty(outcomes.surplus_before[hit], outcomes.deficit[hit])
        contrib[hit] = np.exp(-model.alpha * outcomes.ruin_time[hit]) * np.asarray(w, dtype=float)
    value = float(np.mean(contrib))
    std_error = float(np.std(contrib, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MonteCarloEstimate(
        value=value,
        std_error=std_error,
        paths=n,
        ruined_fraction=float(np.mean(hit)),
        horizon=config.horizon,
        horizon_bias_bound=math.exp(-model.alpha * config.horizon) if model.alpha > 0 else None,
    )


def estimate(model: RiskModel, case: PenaltyCase, u0: float, config: SimConfig) -> MonteCarloEstimate:
    """Monte Carlo estimate of the discounted penalty from initial surplus u0."""
    outcomes = simulate_batch(model, u0, config)
    return estimate_from_outcomes(model, case, outcomes, config)


def sample_claim_sizes(model: RiskModel, n: int, seed: int) -> np.ndarray:
    """n claim draws from the inverse-CDF sampler (stream: path i, block 0)."""
    coefs, shapes, rates = _claim_arrays(model)
    return np.asarray(
        _active_backend.sample_claims(
            coefs, shapes, rates, TAIL_TRUNCATION_SPAN * model.claim.mean, n, seed
        )
    )
