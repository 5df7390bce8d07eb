"""Claim laws, penalty functionals, and their closed-form calculus."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gerbershiu.quadrature import integrate_composite, integrate_semi_infinite
from gerbershiu.risk_model import (
    ClaimDistribution,
    PenaltyCase,
    RiskModel,
    a1_laplace,
    adjustment_coefficient,
    mu_A,
    penalty_A,
)

from conftest import paper_cases, paper_densities, paper_model


class TestClaimDistributionValidation:
    def test_mass_must_be_one(self):
        with pytest.raises(ValueError, match="sum"):
            ClaimDistribution(((0.9, 1, 1.0),))

    def test_negative_density_rejected(self):
        # mass 1 and positive mean, but 3e^-x - 4.5x e^-1.5x dips below zero
        # near x = 1.5, inside the validation grid
        with pytest.raises(ValueError, match="negative"):
            ClaimDistribution(((3.0, 1, 1.0), (-2.0, 2, 1.5)))

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError):
            ClaimDistribution(((1.0, 0, 1.0),))
        with pytest.raises(ValueError):
            ClaimDistribution(((1.0, 1.5, 1.0),))

    def test_bad_rate_rejected(self):
        with pytest.raises(ValueError):
            ClaimDistribution(((1.0, 1, -2.0),))

    def test_negative_argument_rejected(self, exponential_claim):
        for method in ("density", "survival", "cdf", "integrated_tail"):
            with pytest.raises(ValueError):
                getattr(exponential_claim, method)(-0.5)


class TestDensity:
    def test_exponential_at_zero(self, exponential_claim):
        assert exponential_claim.density(0.0) == pytest.approx(1.0)

    def test_erlang2_vanishes_at_zero(self, erlang2_claim):
        assert erlang2_claim.density(0.0) == pytest.approx(0.0, abs=1e-15)

    def test_comb_exp_vanishes_at_zero(self, comb_exp_claim):
        assert comb_exp_claim.density(0.0) == pytest.approx(0.0, abs=1e-14)

    def test_density_integrates_to_one(self, all_claims):
        for name, claim in all_claims.items():
            mass = integrate_composite(
                claim.density, 0.0, 50.0 * claim.mean, panels=1024, n=32
            )
            assert mass == pytest.approx(1.0, abs=1e-8), name


class TestSurvival:
    def test_at_zero(self, all_claims):
        for claim in all_claims.values():
            assert claim.survival(0.0) == pytest.approx(1.0)

    def test_exponential_closed_form(self, exponential_claim):
        assert exponential_claim.survival(1.0) == pytest.approx(np.exp(-1), rel=1e-14)

    def test_far_tail_negligible(self, all_claims):
        for claim in all_claims.values():
            assert claim.survival(50.0 * claim.mean) < 1e-10

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_nonincreasing(self, i):
        claim = ClaimDistribution(((2.0, 1, 1.5), (-1.0, 1, 3.0)))
        x = np.linspace(0, 20, 1001)
        s = claim.survival(x)
        assert s[i] >= s[min(i + 1, 1000)] - 1e-15


class TestMoments:
    def test_exponential(self, exponential_claim):
        assert exponential_claim.mean == pytest.approx(1.0)
        assert exponential_claim.second_moment == pytest.approx(2.0)

    def test_erlang2(self, erlang2_claim):
        assert erlang2_claim.mean == pytest.approx(1.0)
        assert erlang2_claim.second_moment == pytest.approx(1.5)

    def test_comb_exp_unit_mean(self, comb_exp_claim):
        assert comb_exp_claim.mean == pytest.approx(1.0)


class TestLaplace:
    def test_total_mass(self, all_claims):
        for claim in all_claims.values():
            assert claim.laplace(0.0) == pytest.approx(1.0)

    def test_exponential_value(self, exponential_claim):
        assert exponential_claim.laplace(1.0) == pytest.approx(0.5)

    def test_erlang_value(self, erlang2_claim):
        assert erlang2_claim.laplace(2.0) == pytest.approx(0.25)


class TestEquilibriumLaplace:
    def test_unit_at_zero(self, all_claims):
        for claim in all_claims.values():
            assert claim.equilibrium_laplace(0.0) == pytest.approx(1.0, rel=1e-13)

    def test_exponential_self_equilibrium(self, exponential_claim):
        # the equilibrium law of Exp(1) is Exp(1) itself
        assert exponential_claim.equilibrium_laplace(2.0) == pytest.approx(1 / 3, rel=1e-13)

    def test_erlang_value(self, erlang2_claim):
        assert erlang2_claim.equilibrium_laplace(2.0) == pytest.approx(0.375, rel=1e-13)

    def test_in_unit_interval_and_nonincreasing(self, all_claims):
        s = np.linspace(0.0, 50.0, 400)
        for claim in all_claims.values():
            vals = claim.equilibrium_laplace(s)
            assert np.all(vals > 0) and np.all(vals <= 1.0 + 1e-15)
            assert np.all(np.diff(vals) <= 1e-15)


class TestPenaltyA:
    def test_ruin_probability_equals_survival_bitwise(self, all_claims):
        for claim in all_claims.values():
            model = paper_model(claim, alpha=0.0)
            case = PenaltyCase.ruin_probability()
            x = np.linspace(0.0, 30.0, 101)
            assert np.array_equal(penalty_A(model, case, x), claim.survival(x))

    def test_exponential_ruin_value(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        val = penalty_A(model, PenaltyCase.ruin_probability(), 1.0)
        assert val == pytest.approx(np.exp(-1), rel=1e-14)

    def test_deficit_at_zero_is_mean(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        assert penalty_A(model, PenaltyCase.deficit_at_ruin(), 0.0) == pytest.approx(1.0)

    def test_claim_causing_at_zero_oracle(self, exponential_claim):
        """At u=0 the claim causing ruin is just the claim: E[X] = 1."""
        model = paper_model(exponential_claim, alpha=0.0)
        oracle = integrate_composite(lambda y: y * np.exp(-y), 0.0, 50.0, panels=64, n=16)
        val = penalty_A(model, PenaltyCase.claim_causing_ruin(), 0.0)
        assert val == pytest.approx(oracle, abs=1e-10)
        assert val == pytest.approx(1.0, rel=1e-12)

    def test_custom_matches_named(self, erlang2_claim):
        """A custom w = y reproduces the deficit case numerically."""
        model = paper_model(erlang2_claim, alpha=0.0)
        named = penalty_A(model, PenaltyCase.deficit_at_ruin(), 1.5)
        custom = penalty_A(model, PenaltyCase.custom(lambda x, y: y), 1.5)
        assert custom == pytest.approx(named, rel=1e-9)


class TestMuA:
    def test_closed_forms(self, exponential_claim, erlang2_claim):
        m_exp = paper_model(exponential_claim, alpha=0.0)
        assert mu_A(m_exp, PenaltyCase.ruin_probability()) == pytest.approx(1.0)
        assert mu_A(m_exp, PenaltyCase.deficit_at_ruin()) == pytest.approx(1.0)
        m_erl = paper_model(erlang2_claim, alpha=0.0)
        assert mu_A(m_erl, PenaltyCase.claim_causing_ruin()) == pytest.approx(1.5)

    def test_matches_numeric_integration_all_cells(self, all_claims):
        for claim in all_claims.values():
            model = paper_model(claim, alpha=0.0)
            for case, _ in paper_cases().values():
                numeric = integrate_semi_infinite(
                    lambda t: float(penalty_A(model, case, t)), tol=1e-12
                )
                assert mu_A(model, case) == pytest.approx(numeric, abs=1e-8), case.kind


class TestA1Laplace:
    def test_normalized_at_zero(self, all_claims):
        for claim in all_claims.values():
            model = paper_model(claim, alpha=0.0)
            for case, _ in paper_cases().values():
                assert a1_laplace(model, case, 0.0) == pytest.approx(1.0, rel=1e-12)

    def test_exponential_values(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        assert a1_laplace(model, PenaltyCase.ruin_probability(), 1.0) == pytest.approx(0.5)
        assert a1_laplace(model, PenaltyCase.deficit_at_ruin(), 1.0) == pytest.approx(0.5)

    def test_matches_numeric_transform(self, erlang2_claim):
        model = paper_model(erlang2_claim, alpha=0.0)
        case = PenaltyCase.claim_causing_ruin()
        s = 0.7
        numeric = integrate_semi_infinite(
            lambda x: np.exp(-s * x) * float(penalty_A(model, case, x)), tol=1e-12
        ) / mu_A(model, case)
        assert a1_laplace(model, case, s) == pytest.approx(numeric, abs=1e-9)


class TestRiskModel:
    def test_parameter_validation(self, exponential_claim):
        with pytest.raises(ValueError):
            RiskModel(c=0.0, lam=1.0, r=0.01, alpha=0.0, claim=exponential_claim)
        with pytest.raises(ValueError):
            RiskModel(c=1.5, lam=-1.0, r=0.01, alpha=0.0, claim=exponential_claim)
        with pytest.raises(ValueError):
            RiskModel(c=1.5, lam=1.0, r=-0.01, alpha=0.0, claim=exponential_claim)

    def test_adjustment_coefficient_exponential(self, exponential_claim):
        """Closed form for Exp(beta): R = beta - lam/c."""
        model = paper_model(exponential_claim, alpha=0.0)
        assert adjustment_coefficient(model) == pytest.approx(1 / 3, abs=1e-10)

    def test_adjustment_coefficient_absent_without_loading(self, exponential_claim):
        model = RiskModel(c=0.9, lam=1.0, r=0.0, alpha=0.0, claim=exponential_claim)
        assert adjustment_coefficient(model) is None

    def test_lundberg_inequality_all_densities(self, all_claims):
        """lam*(M(R) - 1) = c*R at the root."""
        for claim in all_claims.values():
            model = paper_model(claim, alpha=0.0)
            R = adjustment_coefficient(model)
            mgf = sum(a * (b / (b - R)) ** k for a, k, b in claim.terms)
            assert model.lam * (mgf - 1.0) == pytest.approx(model.c * R, rel=1e-8)
