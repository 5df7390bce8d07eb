"""Path simulator and estimator against closed forms and the solvers."""

import numpy as np
import pytest

import gerbershiu._backends as backends_pkg
from gerbershiu import initial_value as iv
from gerbershiu import montecarlo as mc
from gerbershiu import volterra as vt
from gerbershiu._backends import available_backends
from gerbershiu.risk_model import ClaimDistribution, PenaltyCase, RiskModel

from conftest import paper_model


@pytest.fixture
def classical_model(exponential_claim):
    return RiskModel(c=1.5, lam=1.0, r=0.0, alpha=0.0, claim=exponential_claim)


class TestSimulatePath:
    def test_no_claims_never_ruins(self, exponential_claim):
        model = RiskModel(c=1.5, lam=1e-12, r=0.01, alpha=0.0, claim=exponential_claim)
        out = mc.simulate_batch(model, 0.0, mc.SimConfig(paths=200, horizon=100.0, seed=3))
        assert not out.ruined.any()

    def test_linear_premium_growth_without_interest(self, exponential_claim):
        """r=0, c=1.5: surplus after t units is exactly u0 + 1.5 t (between claims).

        Checked through the ruin record: with a barrier at 3 and u0=0, the
        pre-claim surplus of a ruin at time t < 2 must be exactly 1.5 t.
        """
        model = RiskModel(c=1.5, lam=1.0, r=0.0, alpha=0.0, claim=exponential_claim)
        out = mc.simulate_batch(model, 0.0, mc.SimConfig(paths=4000, seed=11, horizon=50.0))
        first_claim_ruins = out.ruined & (out.surplus_before < 3.0)
        assert first_claim_ruins.any()
        t = out.ruin_time[first_claim_ruins]
        pre = out.surplus_before[first_claim_ruins]
        # among these, paths ruined at the first claim satisfy pre = c*t exactly
        exact = np.isclose(pre, 1.5 * t, rtol=0, atol=1e-12)
        assert exact.sum() >= 50

    def test_barrier_makes_ruin_certain(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.01)
        cfg = mc.SimConfig(paths=20_000, horizon=2000.0, seed=5, barrier=10.0)
        out = mc.simulate_batch(model, 5.0, cfg)
        assert out.ruined.mean() >= 0.999

    def test_barrier_caps_surplus_before_ruin(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.01)
        cfg = mc.SimConfig(paths=5000, horizon=500.0, seed=6, barrier=10.0)
        out = mc.simulate_batch(model, 5.0, cfg)
        assert np.max(out.surplus_before[out.ruined]) <= 10.0 + 1e-12

    def test_single_path_matches_batch_entry(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        cfg = mc.SimConfig(paths=50, horizon=200.0, seed=17)
        batch = mc.simulate_batch(model, 2.0, cfg)
        for index in (0, 7, 49):
            one = mc.simulate_path(model, 2.0, cfg, path_index=index)
            assert one.ruined == batch.ruined[index]
            assert one.ruin_time == batch.ruin_time[index]
            assert one.surplus_before == batch.surplus_before[index]
            assert one.deficit == batch.deficit[index]

    def test_invalid_initial_surplus(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        with pytest.raises(ValueError):
            mc.simulate_batch(model, -1.0, mc.SimConfig(paths=10, seed=0))
        with pytest.raises(ValueError):
            mc.simulate_batch(model, 11.0, mc.SimConfig(paths=10, seed=0, barrier=10.0))

    def test_ruin_invariants(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        cfg = mc.SimConfig(paths=2000, horizon=300.0, seed=23)
        out = mc.simulate_batch(model, 0.0, cfg)
        hit = out.ruined
        assert np.all(out.deficit[hit] > 0)
        assert np.all(out.surplus_before[hit] >= 0)
        assert np.all(out.ruin_time[hit] <= cfg.horizon)


class TestEstimate:
    def test_zero_penalty(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        case = PenaltyCase.custom(lambda x, y: 0.0)
        est = mc.estimate(model, case, 0.0, mc.SimConfig(paths=500, seed=1))
        assert est.value == 0.0 and est.std_error == 0.0

    def test_classical_ruin_probability(self, classical_model):
        """psi(0) = 2/3 for Exp(1), c=1.5, lam=1."""
        est = mc.estimate(
            classical_model,
            PenaltyCase.ruin_probability(),
            0.0,
            mc.SimConfig(paths=100_000, seed=42),
        )
        assert abs(est.value - 2 / 3) <= 3 * est.std_error

    def test_agrees_with_volterra_at_paper_settings(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        case = PenaltyCase.ruin_probability()
        phi0 = iv.phi_infinity_at_zero(model, case)
        table = vt.solve_phi_infinity(model, case, phi0, u_max=30.0, N=3000)
        ref = float(np.interp(5.0, table.u, table.phi))
        est = mc.estimate(model, case, 5.0, mc.SimConfig(paths=100_000, seed=9))
        assert abs(est.value - ref) <= 3 * est.std_error

    def test_reproducible_bitwise(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.01)
        case = PenaltyCase.laplace_ruin_time()
        cfg = mc.SimConfig(paths=5000, seed=77)
        a = mc.estimate(model, case, 1.0, cfg)
        b = mc.estimate(model, case, 1.0, cfg)
        assert a.value == b.value and a.std_error == b.std_error

    def test_clt_scaling(self, exponential_claim):
        """Quadrupling paths halves the standard error, within [0.4, 0.6]."""
        model = paper_model(exponential_claim, alpha=0.0)
        case = PenaltyCase.ruin_probability()
        small = mc.estimate(model, case, 0.0, mc.SimConfig(paths=20_000, seed=3))
        large = mc.estimate(model, case, 0.0, mc.SimConfig(paths=80_000, seed=3))
        ratio = large.std_error / small.std_error
        assert 0.4 <= ratio <= 0.6

    def test_monotone_in_initial_surplus(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.0)
        case = PenaltyCase.ruin_probability()
        cfg = mc.SimConfig(paths=40_000, seed=8)
        ests = [mc.estimate(model, case, u, cfg) for u in (0.0, 10.0, 20.0)]
        for a, b in zip(ests, ests[1:]):
            sigma = np.hypot(a.std_error, b.std_error)
            assert a.value - b.value >= -3 * sigma

    def test_horizon_bias_metadata(self, exponential_claim):
        model = paper_model(exponential_claim, alpha=0.01)
        est = mc.estimate(
            model, PenaltyCase.laplace_ruin_time(), 0.0, mc.SimConfig(paths=100, seed=0)
        )
        assert est.horizon_bias_bound == pytest.approx(np.exp(-0.01 * 2000.0))
        est0 = mc.estimate(
            paper_model(exponential_claim, alpha=0.0),
            PenaltyCase.ruin_probability(),
            0.0,
            mc.SimConfig(paths=100, seed=0),
        )
        assert est0.horizon_bias_bound is None

    def test_early_exit_unbiased_at_noise_scale(self, exponential_claim):
        """The Lundberg cutoff changes classifications with prob < 1e-20."""
        model = paper_model(exponential_claim, alpha=0.0)
        case = PenaltyCase.ruin_probability()
        fast = mc.estimate(model, case, 0.0, mc.SimConfig(paths=3000, seed=2, horizon=400.0))
        slow = mc.estimate(
            model, case, 0.0,
            mc.SimConfig(paths=3000, seed=2, horizon=400.0, early_exit=False),
        )
        assert fast.value == pytest.approx(slow.value, abs=1e-15)


class TestClaimSampler:
    def test_empirical_mean_all_densities(self, all_claims):
        """10^6 inverse-CDF draws match the analytic mean within 4 sigma."""
        for name, claim in all_claims.items():
            model = paper_model(claim, alpha=0.0)
            samples = mc.sample_claim_sizes(model, 1_000_000, seed=13)
            err = samples.std(ddof=1) / np.sqrt(len(samples))
            assert abs(samples.mean() - claim.mean) <= 4 * err, name

    def test_nonnegative_samples(self, comb_exp_claim):
        model = paper_model(comb_exp_claim, alpha=0.0)
        samples = mc.sample_claim_sizes(model, 10_000, seed=1)
        assert np.all(samples >= 0)


class TestBackendAgreement:
    def test_outcomes_match_across_backends(self, comb_exp_claim):
        backends = available_backends()
        if len(backends) < 2:
            pytest.skip("compiled backend not built")
        model = paper_model(comb_exp_claim, alpha=0.01)
        cfg = mc.SimConfig(paths=3000, seed=31, horizon=300.0)
        saved = backends_pkg.active
        results = {}
        try:
            for name, mod in backends.items():
                backends_pkg.active = mod
                results[name] = mc.simulate_batch(model, 1.0, cfg)
        finally:
            backends_pkg.active = saved
        a, b = results["reference"], results["compiled"]
        assert np.array_equal(a.ruined, b.ruined)
        assert a.ruin_time == pytest.approx(b.ruin_time, abs=1e-9)
        assert a.surplus_before == pytest.approx(b.surplus_before, abs=1e-9)
        assert a.deficit == pytest.approx(b.deficit, abs=1e-9)
