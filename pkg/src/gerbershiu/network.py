"""Small feed-forward tanh network with an exact differentiation engine.

Three things are computed without finite differences: the network value, its
derivative with respect to the scalar input (tangent propagated alongside the
forward pass), and the gradient with respect to every weight and bias of any
loss assembled as a weighted sum of squares of affine combinations of values
and input-derivatives at a fixed point set -- the shape of a collocation
loss.  The parameter gradient is a single adjoint sweep through the
tangent-augmented forward pass, so the mixed second-order terms coming from
input-derivative factors are exact.

The batched kernels live in the backends package (compiled core or NumPy
fallback); this module owns parameter packing, initialization, the loss
container, and the text save format.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._backends import active as _active_backend
from .errors import NumericError


@dataclass(frozen=True)
class MLPParams:
    """Layer sizes plus per-layer weights W (n_out, n_in) and biases b (n_out,).

    Input and output dimension are 1.  Arrays are frozen (non-writeable); use
    `pack`/`from_flat` to move to and from the flat parameter vector.
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3 or sizes[0] != 1 or sizes[-1] != 1:
            raise ValueError(
                f"layer sizes must be (1, hidden..., 1) with at least one hidden layer, got {sizes}"
            )
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("need one weight matrix and bias vector per non-input layer")
        frozen_w, frozen_b = [], []
        for ell, (W, b) in enumerate(zip(self.weights, self.biases), start=1):
            W = np.ascontiguousarray(W, dtype=float)
            b = np.ascontiguousarray(b, dtype=float)
            if W.shape != (sizes[ell], sizes[ell - 1]) or b.shape != (sizes[ell],):
                raise ValueError(f"layer {ell} shapes inconsistent with sizes {sizes}")
            W.flags.writeable = False
            b.flags.writeable = False
            frozen_w.append(W)
            frozen_b.append(b)
        object.__setattr__(self, "weights", tuple(frozen_w))
        object.__setattr__(self, "biases", tuple(frozen_b))

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def pack(self) -> np.ndarray:
        """Flatten to one vector: W1, b1, W2, b2, ... each raveled C-order."""
        return np.concatenate(
            [np.concatenate((W.ravel(), b)) for W, b in zip(self.weights, self.biases)]
        )

    @classmethod
    def from_flat(cls, layer_sizes: Sequence[int], theta: np.ndarray) -> "MLPParams":
        sizes = tuple(int(n) for n in layer_sizes)
        theta = np.asarray(theta, dtype=float)
        weights, biases, pos = [], [], 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            weights.append(theta[pos : pos + n_out * n_in].reshape(n_out, n_in).copy())
            pos += n_out * n_in
            biases.append(theta[pos : pos + n_out].copy())
            pos += n_out
        if pos != theta.size:
            raise ValueError(f"flat vector has {theta.size} entries, layers need {pos}")
        return cls(sizes, tuple(weights), tuple(biases))


def parameter_count(layer_sizes: Sequence[int]) -> int:
    sizes = tuple(layer_sizes)
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


def init(layer_sizes: Sequence[int], seed: int) -> MLPParams:
    """Glorot-uniform weights, zero biases, reproducible from the seed."""
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 3:
        raise ValueError("need at least one hidden layer")
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MLPParams(sizes, tuple(weights), tuple(biases))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def forward_batch(params: MLPParams, xs, backend=None):
    backend = backend or _active_backend
    return backend.mlp_forward(params.weights, params.biases, np.asarray(xs, dtype=float))


def forward(params: MLPParams, x: float, backend=None) -> float:
    return float(forward_batch(params, [x], backend)[0])


def forward_with_input_derivative_batch(params: MLPParams, xs, backend=None):
    backend = backend or _active_backend
    v, d, _ = backend.mlp_forward_tangent(
        params.weights, params.biases, np.asarray(xs, dtype=float), None
    )
    return v, d


def forward_with_input_derivative(params: MLPParams, x: float, backend=None):
    v, d = forward_with_input_derivative_batch(params, [x], backend)
    return float(v[0]), float(d[0])


# ---------------------------------------------------------------------------
# Collocation-style losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SquaredResidualLoss:
    """loss(theta) = sum_m weight[m] * residual_m(theta)^2 with

        residual_m = sum over value terms of row m:  coef * value(points[col])
                   + sum over deriv terms of row m:  coef * dvalue(points[col])
                   + offset[m].

    Terms are stored as flat (rows, cols, coefs) triples; rows index residuals,
    cols index points.  Input derivatives are only propagated for the first
    `n_tangent` points, so every deriv-term column must lie below it; ordering
    the few derivative-bearing points first makes large convolution batches
    cheap.
    """

    points: np.ndarray
    value_terms: tuple  # (rows, cols, coefs)
    deriv_terms: tuple  # (rows, cols, coefs)
    offset: np.ndarray
    weight: np.ndarray
    n_tangent: int = None

    def __post_init__(self):
        object.__setattr__(self, "points", np.ascontiguousarray(self.points, dtype=float))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        object.__setattr__(self, "weight", np.asarray(self.weight, dtype=float))
        vt = tuple(np.asarray(a) for a in self.value_terms)
        dt = tuple(np.asarray(a) for a in self.deriv_terms)
        object.__setattr__(self, "value_terms", vt)
        object.__setattr__(self, "deriv_terms", dt)
        if self.n_tangent is None:
            object.__setattr__(self, "n_tangent", len(self.points))
        if np.any(self.weight < 0):
            raise ValueError("residual weights must be nonnegative")
        if len(dt[0]) and int(np.max(dt[1])) >= self.n_tangent:
            raise ValueError("derivative terms must reference the first n_tangent points")

    @property
    def n_residuals(self) -> int:
        return len(self.offset)

    @classmethod
    def from_dense(cls, points, value_coef, deriv_coef, offset, weight) -> "SquaredResidualLoss":
        """Build from dense (n_residuals, n_points) coefficient matrices."""
        value_coef = np.asarray(value_coef, dtype=float)
        deriv_coef = np.asarray(deriv_coef, dtype=float)
        vr, vc = np.nonzero(value_coef)
        dr, dc = np.nonzero(deriv_coef)
        return cls(
            points=np.asarray(points, dtype=float),
            value_terms=(vr, vc, value_coef[vr, vc]),
            deriv_terms=(dr, dc, deriv_coef[dr, dc]),
            offset=offset,
            weight=weight,
        )

    def residuals(self, values: np.ndarray, dvalues: np.ndarray) -> np.ndarray:
        M = self.n_residuals
        vr, vc, va = self.value_terms
        dr, dc, da = self.deriv_terms
        res = self.offset.astype(float).copy()
        if len(vr):
            res += np.bincount(vr, weights=va * values[vc], minlength=M)
        if len(dr):
            res += np.bincount(dr, weights=da * dvalues[dc], minlength=M)
        return res


def _loss_pieces(params: MLPParams, loss: SquaredResidualLoss, backend):
    v, d, ws = backend.mlp_forward_tangent(
        params.weights, params.biases, loss.points, loss.n_tangent
    )
    res = loss.residuals(v, d)
    value = float(np.dot(loss.weight, res * res))
    if not np.isfinite(value):
        bad = int(np.argmax(~np.isfinite(res * res)))
        raise NumericError(f"non-finite loss contribution in residual row {bad}")
    return v, d, ws, res, value


def loss_value(params: MLPParams, loss: SquaredResidualLoss, backend=None) -> float:
    backend = backend or _active_backend
    return _loss_pieces(params, loss, backend)[4]


def loss_and_gradient(params: MLPParams, loss: SquaredResidualLoss, backend=None):
    """Loss value and its exact gradient over the flat parameter vector."""
    backend = backend or _active_backend
    _, _, ws, res, value = _loss_pieces(params, loss, backend)
    P = len(loss.points)
    nt = loss.n_tangent
    rw = 2.0 * loss.weight * res
    vr, vc, va = loss.value_terms
    dr, dc, da = loss.deriv_terms
    gv = np.bincount(vc, weights=va * rw[vr], minlength=P) if len(vr) else np.zeros(P)
    gd = np.bincount(dc, weights=da * rw[dr], minlength=nt) if len(dr) else np.zeros(nt)
    grad = backend.mlp_backward(params.weights, params.biases, ws, gv, gd)
    return value, grad


def loss_gradient(params: MLPParams, loss: SquaredResidualLoss, backend=None) -> np.ndarray:
    """Exact gradient of the loss over the flat parameter vector."""
    return loss_and_gradient(params, loss, backend)[1]


def _row_plans(loss: SquaredResidualLoss):
    """Per-residual point subsets and local adjoint seeds, cached on the loss.

    Row m only references a handful of points; its Jacobian row is one
    adjoint sweep over that sub-batch (derivative-bearing points first).
    """
    cached = loss.__dict__.get("_row_plans")
    if cached is not None:
        return cached
    M = loss.n_residuals
    vr, vc, va = loss.value_terms
    dr, dc, da = loss.deriv_terms
    v_entries = [[] for _ in range(M)]
    d_entries = [[] for _ in range(M)]
    for r, c, a in zip(vr, vc, va):
        v_entries[int(r)].append((int(c), float(a)))
    for r, c, a in zip(dr, dc, da):
        d_entries[int(r)].append((int(c), float(a)))
    plans = []
    for m in range(M):
        local = {}
        order = []
        for c, _ in d_entries[m]:
            if c not in local:
                local[c] = len(order)
                order.append(c)
        nt = len(order)
        for c, _ in v_entries[m]:
            if c not in local:
                local[c] = len(order)
                order.append(c)
        gv = np.zeros(len(order))
        gd = np.zeros(nt)
        for c, a in v_entries[m]:
            gv[local[c]] += a
        for c, a in d_entries[m]:
            gd[local[c]] += a
        plans.append((loss.points[order], nt, gv, gd))
    object.__setattr__(loss, "_row_plans", plans)
    return plans


def residuals_only(params: MLPParams, loss: SquaredResidualLoss, backend=None):
    """Just the residual vector (one batched forward/tangent pass)."""
    backend = backend or _active_backend
    v, d, _ = backend.mlp_forward_tangent(
        params.weights, params.biases, loss.points, loss.n_tangent
    )
    return loss.residuals(v, d)


def residuals_and_jacobian(params: MLPParams, loss: SquaredResidualLoss, backend=None):
    """Residual vector and its exact dense Jacobian over the flat parameters."""
    backend = backend or _active_backend
    v, d, _ = backend.mlp_forward_tangent(
        params.weights, params.biases, loss.points, loss.n_tangent
    )
    res = loss.residuals(v, d)
    plans = _row_plans(loss)
    J = np.empty((loss.n_residuals, params.n_params))
    for m, (pts, nt, gv, gd) in enumerate(plans):
        if len(pts) == 0:
            J[m] = 0.0
            continue
        _, _, ws = backend.mlp_forward_tangent(params.weights, params.biases, pts, nt)
        J[m] = backend.mlp_backward(params.weights, params.biases, ws, gv, gd)
    return res, J


def save_params(params: MLPParams, path) -> None:
    """Text format: first line layer sizes, then one parameter per line."""
    with open(path, "w", newline="\n") as fh:
        fh.write(" ".join(str(n) for n in params.layer_sizes) + "\n")
        for x in params.pack():
            fh.write(repr(float(x)) + "\n")


def load_params(path) -> MLPParams:
    with open(path) as fh:
        sizes = tuple(int(tok) for tok in fh.readline().split())
        theta = np.array([float(line) for line in fh if line.strip()])
    return MLPParams.from_flat(sizes, theta)
