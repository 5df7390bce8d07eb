"""Residual assembly, loss, training, and evaluation of the network solver.

The expensive full-grid agreement runs live in test_acceptance; here one
no-barrier and one barrier training keep runtimes moderate.
"""

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from gerbershiu import initial_value as iv
from gerbershiu import network as nw
from gerbershiu import pinn
from gerbershiu import volterra as vt
from gerbershiu.optimizer import LBFGSConfig
from gerbershiu.risk_model import ClaimDistribution, PenaltyCase, RiskModel

from conftest import paper_model


@pytest.fixture(scope="module")
def paper_exp_model():
    return paper_model(ClaimDistribution.exponential(1.0), alpha=0.01)


@pytest.fixture(scope="module")
def laplace_case():
    return PenaltyCase.laplace_ruin_time()


@pytest.fixture(scope="module")
def anchor(paper_exp_model, laplace_case):
    return iv.phi_infinity_at_zero(paper_exp_model, laplace_case)


@pytest.fixture(scope="module")
def volterra_reference(paper_exp_model, laplace_case, anchor):
    table = vt.solve_phi_infinity(paper_exp_model, laplace_case, anchor, u_max=30.0, N=3000)
    return CubicSpline(table.u, table.phi)


def zero_network():
    return nw.MLPParams(
        (1, 4, 1), (np.zeros((4, 1)), np.zeros((1, 4))), (np.zeros(4), np.zeros(1))
    )


class TestProblemSpec:
    def test_no_barrier_requires_anchor(self, paper_exp_model, laplace_case):
        with pytest.raises(ValueError, match="anchor"):
            pinn.ProblemSpec(model=paper_exp_model, case=laplace_case, u_max=30.0)

    def test_barrier_needs_no_anchor(self, paper_exp_model, laplace_case):
        spec = pinn.ProblemSpec(model=paper_exp_model, case=laplace_case, barrier=10.0)
        assert spec.domain_end == 10.0

    def test_domain_positive(self, paper_exp_model, laplace_case):
        with pytest.raises(ValueError):
            pinn.ProblemSpec(
                model=paper_exp_model, case=laplace_case, u_max=-3.0, anchor=0.5
            )


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            pinn.TrainConfig(residual_points=4)
        with pytest.raises(ValueError):
            pinn.TrainConfig(conv_quad_nodes=2)
        with pytest.raises(ValueError):
            pinn.TrainConfig(w_f=0.0)
        with pytest.raises(ValueError):
            pinn.TrainConfig(placement="sobol")

    def test_random_placement_seeded(self, paper_exp_model, laplace_case, anchor):
        spec = pinn.ProblemSpec(
            model=paper_exp_model, case=laplace_case, u_max=30.0, anchor=anchor
        )
        cfg = pinn.TrainConfig(placement=pinn.UNIFORM_RANDOM, placement_seed=4)
        a = pinn.assemble_loss(spec, cfg)
        b = pinn.assemble_loss(spec, cfg)
        assert np.array_equal(a.points, b.points)
        c = pinn.assemble_loss(
            spec, pinn.TrainConfig(placement=pinn.UNIFORM_RANDOM, placement_seed=5)
        )
        assert not np.array_equal(a.points, c.points)


class TestResidual:
    def test_zero_network_at_origin(self, exponential_claim):
        """Only the inhomogeneous term survives: R(0) = lam * A(0) = lam."""
        model = paper_model(exponential_claim, alpha=0.0)
        case = PenaltyCase.ruin_probability()
        assert pinn.residual(zero_network(), model, case, 0.0) == pytest.approx(1.0)

    def test_empty_convolution_at_origin(self, paper_exp_model, laplace_case):
        """R(0) reduces to -(alpha+lam) phi(0) + c phi'(0) + lam A(0)."""
        params = nw.init([1, 8, 1], seed=3)
        v, d = nw.forward_with_input_derivative(params, 0.0)
        m = paper_exp_model
        expected = -(m.alpha + m.lam) * v + m.c * d + m.lam * 1.0
        assert pinn.residual(params, m, laplace_case, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_converged_reference_annihilates_residual(
        self, paper_exp_model, laplace_case, volterra_reference
    ):
        """Feeding the classical solution through the residual gives ~0.

        The spline interpolant of a converged solver table plays the network:
        residual coefficients are applied to its values and derivatives.
        """
        spline = volterra_reference
        dspline = spline.derivative()
        m = paper_exp_model
        worst = 0.0
        for u in np.linspace(0.0, 30.0, 32):
            rule_vals = 0.0
            from gerbershiu.quadrature import gauss_legendre

            rule = gauss_legendre(32)
            y = 0.5 * u * (rule.nodes + 1.0)
            w = 0.5 * u * rule.weights
            conv = float(np.dot(w * m.claim.density(np.maximum(u - y, 0)), spline(y)))
            from gerbershiu.risk_model import penalty_A

            R = (
                -(m.alpha + m.lam) * float(spline(u))
                + float(dspline(u)) * (u * m.r + m.c)
                + m.lam * conv
                + m.lam * float(penalty_A(m, laplace_case, u))
            )
            worst = max(worst, abs(R))
        assert worst <= 5e-4

    def test_quadrature_consistency(self, paper_exp_model, laplace_case, volterra_reference):
        """Doubling the convolution rule moves the residual below 1e-8."""
        spline = volterra_reference
        dspline = spline.derivative()
        m = paper_exp_model
        from gerbershiu.quadrature import gauss_legendre
        for n in (16, 32):
            worst = 0.0
            for u in np.linspace(0.5, 30.0, 16):
                vals = []
                for nodes in (n, 2 * n):
                    rule = gauss_legendre(nodes)
                    y = 0.5 * u * (rule.nodes + 1.0)
                    w = 0.5 * u * rule.weights
                    vals.append(
                        float(np.dot(w * m.claim.density(np.maximum(u - y, 0)), spline(y)))
                    )
                worst = max(worst, abs(vals[0] - vals[1]))
            assert worst <= 1e-8, n

    def test_negative_point_rejected(self, paper_exp_model, laplace_case):
        with pytest.raises(ValueError):
            pinn.residual(zero_network(), paper_exp_model, laplace_case, -1.0)


class TestLoss:
    def test_boundary_only_zero_when_anchored(self, paper_exp_model, laplace_case, anchor):
        """A constant network equal to the anchor zeroes the boundary term."""
        params = nw.MLPParams(
            (1, 4, 1),
            (np.zeros((4, 1)), np.zeros((1, 4))),
            (np.zeros(4), np.array([anchor])),
        )
        spec = pinn.ProblemSpec(
            model=paper_exp_model, case=laplace_case, u_max=30.0, anchor=anchor
        )
        cfg = pinn.TrainConfig(residual_points=16, conv_quad_nodes=8)
        loss_struct = pinn.assemble_loss(spec, cfg)
        v, d = nw.forward_with_input_derivative_batch(params, loss_struct.points)
        res = loss_struct.residuals(v, d)
        assert res[-1] == pytest.approx(0.0, abs=1e-14)  # boundary row

    def test_nonnegative(self, paper_exp_model, laplace_case, anchor):
        spec = pinn.ProblemSpec(
            model=paper_exp_model, case=laplace_case, u_max=30.0, anchor=anchor
        )
        cfg = pinn.TrainConfig(residual_points=16, conv_quad_nodes=8)
        for seed in range(3):
            assert pinn.loss(nw.init([1, 6, 1], seed), spec, cfg) >= 0.0


SMALL_TRAIN = pinn.TrainConfig(
    residual_points=48,
    conv_quad_nodes=8,
    arch=(1, 10, 10, 1),
    lbfgs=LBFGSConfig(max_iter=800, grad_tol=1e-9, loss_tol=1e-9),
    seed=1,
    first_layer_scale=2.0 / 12.0,
)


class TestTrain:
    @pytest.fixture(scope="class")
    def small_problem(self):
        model = paper_model(ClaimDistribution.exponential(1.0), alpha=0.01)
        case = PenaltyCase.laplace_ruin_time()
        anchor = iv.phi_infinity_at_zero(model, case)
        return pinn.ProblemSpec(model=model, case=case, u_max=12.0, anchor=anchor)

    @pytest.fixture(scope="class")
    def trained(self, small_problem):
        return pinn.train(small_problem, SMALL_TRAIN)

    def test_loss_drops_monotonically(self, trained):
        params, report = trained
        hist = np.array(report.loss_history)
        assert np.all(np.diff(hist) <= 1e-12)
        assert report.final_loss < 1e-6

    def test_boundary_anchored(self, small_problem, trained):
        params, _ = trained
        value = nw.forward(params, 0.0)
        assert abs(value - small_problem.anchor) <= 1e-4 * small_problem.anchor

    def test_agrees_with_volterra_on_small_domain(self, small_problem, trained):
        params, _ = trained
        table = vt.solve_phi_infinity(
            small_problem.model, small_problem.case, small_problem.anchor,
            u_max=12.0, N=2400,
        )
        grid = np.linspace(0.0, 12.0, 97)
        mine = pinn.evaluate(params, grid).phi
        ref = np.interp(grid, table.u, table.phi)
        rel = np.abs(mine - ref) / np.maximum(np.abs(ref), 1e-3)
        assert np.max(rel) <= 2e-3

    def test_deterministic(self, small_problem):
        cfg = pinn.TrainConfig(
            residual_points=24,
            conv_quad_nodes=8,
            arch=(1, 8, 1),
            lbfgs=LBFGSConfig(max_iter=60),
            seed=3,
        )
        p1, r1 = pinn.train(small_problem, cfg)
        p2, r2 = pinn.train(small_problem, cfg)
        assert np.array_equal(p1.pack(), p2.pack())
        assert r1.loss_history == r2.loss_history


class TestEvaluate:
    def test_repeatable_and_matches_forward(self):
        params = nw.init([1, 10, 1], seed=0)
        grid = np.linspace(0.0, 5.0, 21)
        a = pinn.evaluate(params, grid)
        b = pinn.evaluate(params, grid)
        assert np.array_equal(a.phi, b.phi)
        assert np.array_equal(a.dphi, b.dphi)
        assert a.phi[3] == nw.forward(params, grid[3])

    def test_single_point_grid(self):
        params = nw.init([1, 6, 1], seed=2)
        table = pinn.evaluate(params, [2.5])
        assert len(table.u) == 1

    def test_extrapolation_warns(self):
        params = nw.init([1, 6, 1], seed=2)
        with pytest.warns(RuntimeWarning, match="extrapolat"):
            table = pinn.evaluate(params, [0.0, 40.0], domain_end=30.0)
        assert table.meta.get("extrapolated")
