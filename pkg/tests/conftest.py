import numpy as np
import pytest

from gerbershiu.risk_model import ClaimDistribution, PenaltyCase, RiskModel


def paper_densities():
    """The three claim laws used throughout the experiments (all mean 1)."""
    return {
        "exponential": ClaimDistribution.exponential(1.0),
        "erlang2": ClaimDistribution.erlang(2, 2.0),
        "comb_exp": ClaimDistribution(((2.0, 1, 1.5), (-1.0, 1, 3.0))),
    }


def paper_cases():
    """The four penalty functionals with their conventional discount forces."""
    return {
        "ruin_probability": (PenaltyCase.ruin_probability(), 0.0),
        "laplace_ruin_time": (PenaltyCase.laplace_ruin_time(), 0.01),
        "claim_causing_ruin": (PenaltyCase.claim_causing_ruin(), 0.0),
        "deficit_at_ruin": (PenaltyCase.deficit_at_ruin(), 0.0),
    }


def paper_model(claim, alpha, r=0.01):
    return RiskModel(c=1.5, lam=1.0, r=r, alpha=alpha, claim=claim)


@pytest.fixture
def exponential_claim():
    return ClaimDistribution.exponential(1.0)


@pytest.fixture
def erlang2_claim():
    return ClaimDistribution.erlang(2, 2.0)


@pytest.fixture
def comb_exp_claim():
    return ClaimDistribution(((2.0, 1, 1.5), (-1.0, 1, 3.0)))


@pytest.fixture
def all_claims(exponential_claim, erlang2_claim, comb_exp_claim):
    return {
        "exponential": exponential_claim,
        "erlang2": erlang2_claim,
        "comb_exp": comb_exp_claim,
    }


def trapezoid_semi_infinite(f, step=1e-3, upper=200.0):
    """Independent slow oracle for integrals over [0, inf) of decaying f."""
    x = np.arange(0.0, upper + step, step)
    y = np.array([f(v) for v in x])
    return float(np.trapezoid(y, x))
