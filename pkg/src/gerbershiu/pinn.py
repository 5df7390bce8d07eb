"""Collocation network solver for the penalty-function equation.

The trained network u -> phi(u) is penalized at residual points by the
squared equation residual

    R(u) = -(alpha+lam)*phi(u) + phi'(u)*(u*r + c)
           + lam * sum_i w_i f(u - y_i) phi(y_i) + lam*A(u),

where (y_i, w_i) is a Gauss-Legendre rule mapped to [0, u] (nodes recomputed
per residual point, so the convolution quadrature is spectrally accurate for
the entire mixed-Erlang integrands).  The boundary term anchors phi(0) to the
exact no-barrier starting value, or enforces phi'(b) = 0 under a dividend
barrier.  Everything reduces to one SquaredResidualLoss, so the optimizer
sees exact gradients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import network
from .errors import ConvergenceError
from .network import MLPParams, SquaredResidualLoss
from .optimizer import (
    AdamConfig,
    LBFGSConfig,
    LevenbergMarquardtConfig,
    OptReport,
    adam_minimize,
    lbfgs_minimize,
    levenberg_marquardt,
)
from .quadrature import gauss_legendre
from .risk_model import PenaltyCase, RiskModel, penalty_A, warn_if_loading_nonpositive
from .volterra import SolutionTable

EQUISPACED = "equispaced"
UNIFORM_RANDOM = "uniform_random"

DEFAULT_ARCH = (1, 20, 20, 20, 20, 1)


@dataclass(frozen=True)
class ProblemSpec:
    """One solve: model, penalty case, and domain/boundary information.

    Without a barrier the domain is [0, u_max] and `anchor` must carry the
    precomputed no-barrier value at 0; with a barrier level b the domain is
    [0, b] and the boundary condition is phi'(b) = 0 (no starting value
    needed).
    """

    model: RiskModel
    case: PenaltyCase
    barrier: Optional[float] = None
    u_max: Optional[float] = None
    anchor: Optional[float] = None

    def __post_init__(self):
        if self.barrier is None:
            if self.u_max is None or not self.u_max > 0:
                raise ValueError("no-barrier problems need a positive u_max")
            if self.anchor is None or not np.isfinite(self.anchor):
                raise ValueError(
                    "no-barrier problems need the finite precomputed anchor phi(0); "
                    "see initial_value.phi_infinity_at_zero"
                )
            warn_if_loading_nonpositive(self.model)
        else:
            if not self.barrier > 0:
                raise ValueError(f"barrier level must be positive, got {self.barrier}")
            if self.u_max is not None and self.u_max != self.barrier:
                raise ValueError("with a barrier the domain ends at b; leave u_max unset")

    @property
    def domain_end(self) -> float:
        return float(self.barrier if self.barrier is not None else self.u_max)


@dataclass(frozen=True)
class TrainConfig:
    residual_points: int = 256
    placement: str = EQUISPACED
    placement_seed: int = 0
    conv_quad_nodes: int = 32
    w_f: float = 1.0
    w_g: float = 1.0
    optimizer: str = "lbfgs"
    lbfgs: LBFGSConfig = field(default_factory=LBFGSConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    arch: tuple = DEFAULT_ARCH
    seed: int = 0
    # multiplier on the Glorot first-layer weights; 1.0 keeps the plain
    # initialization, 2/domain_end keeps first-layer preactivations in the
    # tanh active range on wide domains and converges markedly faster
    first_layer_scale: float = 1.0
    # optional damped Gauss-Newton finishing stage: once L-BFGS has found the
    # basin, a handful of normal-equation steps reach residual depths the
    # first-order method would need tens of thousands of iterations for
    gn_polish: bool = False
    gn_loss_tol: float = 2e-12
    gn_max_iter: int = 150

    def __post_init__(self):
        if self.residual_points < 8:
            raise ValueError("need at least 8 residual points")
        if self.conv_quad_nodes < 4:
            raise ValueError("need at least 4 convolution quadrature nodes")
        if not (self.w_f > 0 and self.w_g > 0):
            raise ValueError("loss weights must be positive")
        if not self.first_layer_scale > 0:
            raise ValueError("first_layer_scale must be positive")
        if self.placement not in (EQUISPACED, UNIFORM_RANDOM):
            raise ValueError(f"unknown residual-point placement {self.placement!r}")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def tuned_train_config(
    domain_end: float,
    seed: int = 0,
    loss_tol: float = 2e-12,
    lbfgs_iter: int = 1500,
    conv_quad_nodes: int = 16,
) -> TrainConfig:
    """Training configuration used by the comparison experiments.

    Differences from the plain defaults: the first-layer initialization is
    scaled to the domain width (plain Glorot saturates most units at init on
    [0, 30] and roughly doubles the iteration count); the convolution rule
    uses 16 nodes, already converged to ~1e-10 for the supported claim family
    at half the cost of 32; and a Gauss-Newton finishing stage drives the
    residuals to the 1e-12 loss target that the 1e-3 agreement bounds need,
    which plain L-BFGS only reaches after tens of thousands of iterations.
    """
    return TrainConfig(
        # 256 points leave room for between-point residual excursions once the
        # at-point residuals reach 1e-7 scale; 512 keeps the aliased error in
        # the far tail below the 1e-6 absolute budget
        residual_points=512,
        conv_quad_nodes=conv_quad_nodes,
        # w_g pins the anchor to sqrt(loss_tol/w_g) so the residual-free
        # homogeneous mode stays suppressed
        w_g=1e4,
        lbfgs=LBFGSConfig(max_iter=lbfgs_iter, grad_tol=1e-9, loss_tol=loss_tol),
        seed=seed,
        first_layer_scale=2.0 / domain_end,
        gn_polish=True,
        gn_loss_tol=loss_tol,
    )


def _residual_points(spec: ProblemSpec, config: TrainConfig) -> np.ndarray:
    end = spec.domain_end
    if config.placement == EQUISPACED:
        return np.linspace(0.0, end, config.residual_points)
    rng = np.random.Generator(np.random.PCG64(config.placement_seed))
    return np.sort(rng.uniform(0.0, end, size=config.residual_points))


def assemble_loss(spec: ProblemSpec, config: TrainConfig) -> SquaredResidualLoss:
    """Build the collocation loss for the optimizer: J residual rows + 1 boundary row."""
    model, case = spec.model, spec.case
    c, lam, r, alpha = model.c, model.lam, model.r, model.alpha
    u = _residual_points(spec, config)
    J = len(u)
    n = config.conv_quad_nodes
    rule = gauss_legendre(n)

    # convolution nodes/weights per residual point, mapped to [0, u_j]
    half = 0.5 * u[:, None]
    y = half * (rule.nodes[None, :] + 1.0)  # (J, n)
    wq = half * rule.weights[None, :]
    fvals = model.claim.density(np.maximum(u[:, None] - y, 0.0))

    # layout: residual points (tangent-bearing), boundary point, then the
    # value-only convolution nodes
    bpt = 0.0 if spec.barrier is None else spec.barrier
    points = np.concatenate([u, [bpt], y.ravel()])
    n_tangent = J + (0 if spec.barrier is None else 1)

    rows_diag = np.arange(J)
    conv_rows = np.repeat(rows_diag, n)
    conv_cols = J + 1 + np.arange(J * n)
    value_rows = np.concatenate([rows_diag, conv_rows, [J] if spec.barrier is None else []])
    value_cols = np.concatenate([rows_diag, conv_cols, [J] if spec.barrier is None else []])
    value_coef = np.concatenate(
        [
            np.full(J, -(alpha + lam)),
            (lam * wq * fvals).ravel(),
            [1.0] if spec.barrier is None else [],
        ]
    )
    deriv_rows = np.concatenate([rows_diag, [] if spec.barrier is None else [J]])
    deriv_cols = np.concatenate([rows_diag, [] if spec.barrier is None else [J]])
    deriv_coef = np.concatenate([u * r + c, [] if spec.barrier is None else [1.0]])

    offset = np.concatenate(
        [
            lam * np.asarray(penalty_A(model, case, u), dtype=float),
            [-spec.anchor] if spec.barrier is None else [0.0],
        ]
    )
    weight = np.concatenate([np.full(J, config.w_f), [config.w_g]])
    return SquaredResidualLoss(
        points=points,
        value_terms=(value_rows.astype(int), value_cols.astype(int), value_coef),
        deriv_terms=(deriv_rows.astype(int), deriv_cols.astype(int), deriv_coef),
        offset=offset,
        weight=weight,
        n_tangent=n_tangent,
    )


def residual(
    params: MLPParams,
    model: RiskModel,
    case: PenaltyCase,
    u: float,
    conv_quad_nodes: int = 32,
    backend=None,
) -> float:
    """Equation residual of the network at a single point."""
    if u < 0:
        raise ValueError(f"residual point must be nonnegative, got {u}")
    rule = gauss_legendre(conv_quad_nodes)
    y = 0.5 * u * (rule.nodes + 1.0)
    wq = 0.5 * u * rule.weights
    backend_mod = backend
    if backend_mod is None:
        from ._backends import active as backend_mod
    v, d, _ = backend_mod.mlp_forward_tangent(
        params.weights, params.biases, np.concatenate([[u], y]), 1
    )
    fvals = model.claim.density(np.maximum(u - y, 0.0))
    conv = float(np.dot(wq * fvals, v[1:]))
    A_u = float(penalty_A(model, case, u))
    value = (
        -(model.alpha + model.lam) * v[0]
        + d[0] * (u * model.r + model.c)
        + model.lam * conv
        + model.lam * A_u
    )
    if not np.isfinite(value):
        raise ValueError(f"non-finite residual at u={u}")
    return value


def loss(params: MLPParams, spec: ProblemSpec, config: TrainConfig, backend=None) -> float:
    """The training objective: w_f * sum R(u_j)^2 + w_g * boundary residual^2."""
    return network.loss_value(params, assemble_loss(spec, config), backend)


def train(spec: ProblemSpec, config: TrainConfig, backend=None):
    """Train from a fresh Glorot initialization; returns (params, OptReport)."""
    loss_struct = assemble_loss(spec, config)
    params0 = network.init(config.arch, config.seed)
    if config.first_layer_scale != 1.0:
        weights = [w.copy() for w in params0.weights]
        weights[0] = weights[0] * config.first_layer_scale
        params0 = MLPParams(params0.layer_sizes, tuple(weights), params0.biases)
    sizes = params0.layer_sizes
    theta0 = params0.pack()

    cache = {"key": None, "value": None, "grad": None}

    def value_and_grad(theta):
        key = theta.tobytes()
        if cache["key"] != key:
            p = MLPParams.from_flat(sizes, theta)
            cache["value"], cache["grad"] = network.loss_and_gradient(p, loss_struct, backend)
            cache["key"] = key
        return cache["value"], cache["grad"]

    f = lambda theta: value_and_grad(theta)[0]
    g = lambda theta: value_and_grad(theta)[1]

    if config.optimizer == "lbfgs":
        theta, report = lbfgs_minimize(f, g, theta0, config.lbfgs)
    else:
        theta, report = adam_minimize(f, g, theta0, config.adam)

    if config.gn_polish and report.final_loss > config.gn_loss_tol:
        def res_jac(th):
            return network.residuals_and_jacobian(
                MLPParams.from_flat(sizes, th), loss_struct, backend
            )

        def res_only(th):
            return network.residuals_only(MLPParams.from_flat(sizes, th), loss_struct, backend)

        theta, polish = levenberg_marquardt(
            res_jac,
            loss_struct.weight,
            theta,
            LevenbergMarquardtConfig(
                max_iter=config.gn_max_iter, loss_tol=config.gn_loss_tol
            ),
            residuals_only=res_only,
        )
        report = OptReport(
            final_loss=polish.final_loss,
            iterations=report.iterations + polish.iterations,
            grad_inf_norm=polish.grad_inf_norm,
            converged=polish.converged,
            loss_history=report.loss_history + polish.loss_history[1:],
            message=f"{report.message}; polish: {polish.message}",
        )
    return MLPParams.from_flat(sizes, theta), report


def evaluate(
    params: MLPParams, grid, domain_end: Optional[float] = None, backend=None
) -> SolutionTable:
    """Network values and derivatives on an increasing grid."""
    grid = np.asarray(grid, dtype=float)
    meta = {}
    if domain_end is not None and np.any(grid > domain_end):
        warnings.warn(
            f"evaluation grid exceeds the training domain end {domain_end:g}; extrapolating",
            RuntimeWarning,
            stacklevel=2,
        )
        meta["extrapolated"] = True
    v, d = network.forward_with_input_derivative_batch(params, grid, backend)
    return SolutionTable(u=grid, phi=v, dphi=d, meta=meta)


def train_or_raise(spec: ProblemSpec, config: TrainConfig, backend=None):
    """Like train, but a non-converged report raises ConvergenceError."""
    params, report = train(spec, config, backend)
    if not report.converged:
        raise ConvergenceError(
            f"training stopped without convergence after {report.iterations} iterations "
            f"({report.message}); final loss {report.final_loss:.3e}"
        )
    return params, report
