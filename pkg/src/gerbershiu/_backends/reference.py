"""Pure-NumPy backend: batched MLP passes and the path simulator.

This is the fallback used when the compiled extension is unavailable, and
the definition of record for both backends' semantics.  The compiled core
mirrors these algorithms operation for operation; results agree to floating
point summation-order differences (MLP) and to the bisection tolerance (path
simulation).

MLP batches are split: input derivatives (and their adjoints) are only
propagated for the first `n_tangent` points of the batch -- in a collocation
loss the convolution nodes outnumber the residual points thirtyfold and need
values only.

The simulator's randomness is a Philox4x32-10 counter-based generator keyed
by the 64-bit master seed.  Draw block k of path p uses counter words
(k_lo, k_hi, p_lo, p_hi), so any path's stream can be regenerated in
isolation and in any execution order.
"""

from __future__ import annotations

import numpy as np

NAME = "reference"

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_SHIFT32 = np.uint64(32)
_INV53 = float(2.0**-53)

BISECTION_TOL = 1e-12


# ---------------------------------------------------------------------------
# MLP kernels
# ---------------------------------------------------------------------------

def mlp_forward(weights, biases, xs):
    """Network values at the points xs; hidden tanh, affine output."""
    a = np.asarray(xs, dtype=float).reshape(-1, 1)
    for W, b in zip(weights[:-1], biases[:-1]):
        a = np.tanh(a @ W.T + b)
    return (a @ weights[-1].T + biases[-1]).ravel()


def mlp_forward_tangent(weights, biases, xs, n_tangent=None):
    """Values for all points, input derivatives for the first n_tangent.

    Returns (values, dvalues, workspace); the workspace feeds mlp_backward.
    """
    a = np.asarray(xs, dtype=float).reshape(-1, 1)
    P = a.shape[0]
    nt = P if n_tangent is None else int(n_tangent)
    t = np.ones((nt, 1))
    a_list, t_list, s_list, q_list = [a], [t], [], []
    for W, b in zip(weights[:-1], biases[:-1]):
        a = np.tanh(a @ W.T + b)
        s = 1.0 - a * a
        q = t @ W.T
        t = s[:nt] * q
        a_list.append(a)
        t_list.append(t)
        s_list.append(s)
        q_list.append(q)
    WL, bL = weights[-1], biases[-1]
    v = (a @ WL.T + bL).ravel()
    d = (t @ WL.T).ravel()
    return v, d, (nt, a_list, t_list, s_list, q_list)


def mlp_backward(weights, biases, workspace, gv, gd):
    """Gradient of sum_p gv[p]*value(x_p) + sum_{p<nt} gd[p]*dvalue(x_p).

    Returns the flat gradient in packing order (W1, b1, ..., WL, bL, each
    raveled C-order).
    """
    nt, a_list, t_list, s_list, q_list = workspace
    L = len(weights)
    gW = [None] * L
    gb = [None] * L
    vbar = np.asarray(gv, dtype=float).reshape(-1, 1)
    dbar = np.asarray(gd, dtype=float).reshape(-1, 1)
    WL = weights[-1]
    gW[L - 1] = vbar.T @ a_list[L - 1] + dbar.T @ t_list[L - 1]
    gb[L - 1] = vbar.sum(axis=0)
    abar = vbar @ WL
    tbar = dbar @ WL
    for l in range(L - 2, -1, -1):
        s, q = s_list[l], q_list[l]
        qbar = tbar * s[:nt]
        abar[:nt] -= 2.0 * a_list[l + 1][:nt] * (tbar * q)
        zbar = abar * s
        gW[l] = zbar.T @ a_list[l] + qbar.T @ t_list[l]
        gb[l] = zbar.sum(axis=0)
        W = weights[l]
        abar = zbar @ W
        tbar = qbar @ W
    return np.concatenate([np.concatenate((w.ravel(), b.ravel())) for w, b in zip(gW, gb)])


# ---------------------------------------------------------------------------
# Counter-based RNG
# ---------------------------------------------------------------------------

def _philox_uniforms(seed, block, paths):
    """Two uniform [0,1) doubles per (block, path) pair, vectorized over paths."""
    c0 = block & _MASK32
    c1 = (block >> _SHIFT32) & _MASK32
    c2 = paths & _MASK32
    c3 = (paths >> _SHIFT32) & _MASK32
    k0 = seed & _MASK32
    k1 = (seed >> _SHIFT32) & _MASK32
    for rnd in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
        if rnd < 9:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
    u1 = (((c0 << _SHIFT32) | c1) >> np.uint64(11)).astype(float) * _INV53
    u2 = (((c2 << _SHIFT32) | c3) >> np.uint64(11)).astype(float) * _INV53
    return u1, u2


# ---------------------------------------------------------------------------
# Claim sampling
# ---------------------------------------------------------------------------

def _claim_cdf(x, coefs, shapes, rates):
    """Mixed-Erlang CDF, vectorized; accumulation order matches the compiled core."""
    x = np.asarray(x, dtype=float)
    surv = np.zeros_like(x)
    for a, k, beta in zip(coefs, shapes, rates):
        t = beta * x
        term = np.ones_like(x)
        poly = np.ones_like(x)
        for i in range(1, int(k)):
            term = term * t / i
            poly = poly + term
        surv = surv + a * np.exp(-t) * poly
    return 1.0 - surv


def _invert_claim_cdf(u, coefs, shapes, rates, hi0):
    """Bisection inversion of the claim CDF to absolute tolerance 1e-12."""
    u = np.asarray(u, dtype=float)
    lo = np.zeros_like(u)
    hi = np.full_like(u, hi0)
    short = _claim_cdf(hi, coefs, shapes, rates) < u
    doublings = 0
    while short.any() and doublings < 64:
        hi[short] *= 2.0
        short[short] = _claim_cdf(hi[short], coefs, shapes, rates) < u[short]
        doublings += 1
    active = (hi - lo) > BISECTION_TOL
    while active.any():
        mid = 0.5 * (lo[active] + hi[active])
        below = _claim_cdf(mid, coefs, shapes, rates) < u[active]
        lo_a = lo[active]
        hi_a = hi[active]
        lo_a[below] = mid[below]
        hi_a[~below] = mid[~below]
        lo[active] = lo_a
        hi[active] = hi_a
        active = (hi - lo) > BISECTION_TOL
    return 0.5 * (lo + hi)


def sample_claims(coefs, shapes, rates, hi0, n, seed, first_path=0):
    """n inverse-CDF claim draws; draw i uses path stream first_path+i, block 0."""
    paths = (np.uint64(first_path) + np.arange(n, dtype=np.uint64)).astype(np.uint64)
    seed_u = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    _, u2 = _philox_uniforms(seed_u, np.uint64(0), paths)
    return _invert_claim_cdf(u2, np.asarray(coefs, float), np.asarray(shapes, int),
                             np.asarray(rates, float), hi0)


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

def simulate_paths(
    c, lam, r, coefs, shapes, rates, claim_hi,
    u0, n_paths, horizon, seed, barrier, cutoff, first_path=0,
):
    """Simulate surplus paths to ruin, horizon, or the early-exit cutoff.

    Returns (ruined, ruin_time, surplus_before, deficit) arrays.  barrier is
    NaN for the uncapped process; cutoff is +inf when early exit is disabled.
    Round k of every live path consumes exactly Philox block k: the first
    uniform drives the exponential inter-claim time, the second the claim.
    """
    coefs = np.asarray(coefs, dtype=float)
    shapes = np.asarray(shapes, dtype=int)
    rates = np.asarray(rates, dtype=float)
    n = int(n_paths)
    capped = not np.isnan(barrier)

    ruined = np.zeros(n, dtype=bool)
    ruin_time = np.zeros(n)
    before = np.zeros(n)
    deficit = np.zeros(n)

    x = np.full(n, float(u0))
    t = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    if u0 >= cutoff:
        alive[:] = False
    paths = (np.uint64(first_path) + np.arange(n, dtype=np.uint64)).astype(np.uint64)
    seed_u = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    block = 0
    while alive.any():
        idx = np.nonzero(alive)[0]
        u1, u2 = _philox_uniforms(seed_u, np.uint64(block), paths[idx])
        dt = -np.log1p(-u1) / lam
        t_next = t[idx] + dt
        expired = t_next > horizon
        alive[idx[expired]] = False

        live = idx[~expired]
        if live.size:
            dt_live = dt[~expired]
            if r > 0:
                pre = (x[live] + c / r) * np.exp(r * dt_live) - c / r
            else:
                pre = x[live] + c * dt_live
            if capped:
                pre = np.minimum(pre, barrier)
            claim = _invert_claim_cdf(u2[~expired], coefs, shapes, rates, claim_hi)
            post = pre - claim
            hit = post < 0
            dead = live[hit]
            ruined[dead] = True
            ruin_time[dead] = t_next[~expired][hit]
            before[dead] = pre[hit]
            deficit[dead] = -post[hit]
            alive[dead] = False

            ok = live[~hit]
            x[ok] = post[~hit]
            t[ok] = t_next[~expired][~hit]
            if np.isfinite(cutoff):
                done = ok[x[ok] >= cutoff]
                alive[done] = False
        block += 1
    return ruined, ruin_time, before, deficit
