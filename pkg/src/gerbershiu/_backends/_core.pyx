# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: batched MLP passes and the path simulator.

Mirrors `reference.py` operation for operation; see that module for the
semantics.  Activations are held in (width, batch) layout so the innermost
loops run over contiguous batch entries; input-derivative (tangent) state is
carried only for the leading `n_tangent` batch columns.  The big tanh blocks
go through NumPy's vectorized kernel; everything else is straight C loops.
"""

import numpy as np

from libc.math cimport exp, log1p
from libc.stdint cimport int64_t, uint64_t

NAME = "compiled"

cdef double BISECTION_TOL = 1e-12

cdef uint64_t MASK32 = 0xFFFFFFFFu
cdef uint64_t M0 = 0xD2511F53u
cdef uint64_t M1 = 0xCD9E8D57u
cdef uint64_t W0 = 0x9E3779B9u
cdef uint64_t W1 = 0xBB67AE85u
cdef double INV53 = 1.0 / 9007199254740992.0  # 2^-53


# ---------------------------------------------------------------------------
# MLP kernels
# ---------------------------------------------------------------------------

cdef void _affine(double[:, ::1] out, const double[:, ::1] W, const double[::1] b,
                  const double[:, ::1] inp, Py_ssize_t cols) noexcept nogil:
    # out[:, :cols] = W @ inp[:, :cols] + b; two input rows at a time to cut
    # memory sweeps over out
    cdef Py_ssize_t n_out = out.shape[0], n_in = inp.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double w0, w1
    for i in range(n_out):
        for p in range(cols):
            out[i, p] = b[i]
        j = 0
        while j + 1 < n_in:
            w0 = W[i, j]
            w1 = W[i, j + 1]
            for p in range(cols):
                out[i, p] += w0 * inp[j, p] + w1 * inp[j + 1, p]
            j += 2
        if j < n_in:
            w0 = W[i, j]
            for p in range(cols):
                out[i, p] += w0 * inp[j, p]


cdef void _matmul(double[:, ::1] out, const double[:, ::1] W,
                  const double[:, ::1] inp, Py_ssize_t cols) noexcept nogil:
    cdef Py_ssize_t n_out = out.shape[0], n_in = inp.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double w
    for i in range(n_out):
        for p in range(cols):
            out[i, p] = 0.0
        for j in range(n_in):
            w = W[i, j]
            for p in range(cols):
                out[i, p] += w * inp[j, p]


cdef void _matmul_T(double[:, ::1] out, const double[:, ::1] W,
                    const double[:, ::1] g, Py_ssize_t cols) noexcept nogil:
    # out[:, :cols] = W^T @ g[:, :cols]
    cdef Py_ssize_t n_out = g.shape[0], n_in = out.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double w
    for j in range(n_in):
        for p in range(cols):
            out[j, p] = 0.0
    for i in range(n_out):
        for j in range(n_in):
            w = W[i, j]
            for p in range(cols):
                out[j, p] += w * g[i, p]


cdef double _dot_rows(const double[:, ::1] x, Py_ssize_t i,
                      const double[:, ::1] y, Py_ssize_t j,
                      Py_ssize_t cols) noexcept nogil:
    # four fixed partial sums so the reduction vectorizes deterministically
    cdef double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0
    cdef Py_ssize_t p = 0
    while p + 3 < cols:
        a0 += x[i, p] * y[j, p]
        a1 += x[i, p + 1] * y[j, p + 1]
        a2 += x[i, p + 2] * y[j, p + 2]
        a3 += x[i, p + 3] * y[j, p + 3]
        p += 4
    while p < cols:
        a0 += x[i, p] * y[j, p]
        p += 1
    return (a0 + a1) + (a2 + a3)


cdef double _row_sum(const double[:, ::1] x, Py_ssize_t i, Py_ssize_t cols) noexcept nogil:
    cdef double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0
    cdef Py_ssize_t p = 0
    while p + 3 < cols:
        a0 += x[i, p]
        a1 += x[i, p + 1]
        a2 += x[i, p + 2]
        a3 += x[i, p + 3]
        p += 4
    while p < cols:
        a0 += x[i, p]
        p += 1
    return (a0 + a1) + (a2 + a3)


def mlp_forward(weights, biases, xs):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    P = xs.shape[0]
    L = len(weights)
    a = np.empty((1, P))
    a[0, :] = xs
    for l in range(L - 1):
        W = np.ascontiguousarray(weights[l], dtype=np.float64)
        b = np.ascontiguousarray(biases[l], dtype=np.float64)
        z = np.empty((W.shape[0], P))
        _affine(z, W, b, a, P)
        np.tanh(z, out=z)
        a = z
    WL = np.ascontiguousarray(weights[L - 1], dtype=np.float64)
    bL = np.ascontiguousarray(biases[L - 1], dtype=np.float64)
    v = np.empty((1, P))
    _affine(v, WL, bL, a, P)
    return v[0].copy()


cdef void _sq_one_minus(double[:, ::1] s, const double[:, ::1] a) noexcept nogil:
    cdef Py_ssize_t i, p
    for i in range(s.shape[0]):
        for p in range(s.shape[1]):
            s[i, p] = 1.0 - a[i, p] * a[i, p]


cdef void _mul_into(double[:, ::1] out, const double[:, ::1] x,
                    const double[:, ::1] y, Py_ssize_t cols) noexcept nogil:
    cdef Py_ssize_t i, p
    for i in range(out.shape[0]):
        for p in range(cols):
            out[i, p] = x[i, p] * y[i, p]


def mlp_forward_tangent(weights, biases, xs, n_tangent=None):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    P = xs.shape[0]
    cdef Py_ssize_t nt = P if n_tangent is None else int(n_tangent)
    L = len(weights)
    a = np.empty((1, P))
    a[0, :] = xs
    t = np.ones((1, nt))
    a_list, t_list, s_list, q_list = [a], [t], [], []
    for l in range(L - 1):
        W = np.ascontiguousarray(weights[l], dtype=np.float64)
        b = np.ascontiguousarray(biases[l], dtype=np.float64)
        n_out = W.shape[0]
        z = np.empty((n_out, P))
        _affine(z, W, b, a, P)
        np.tanh(z, out=z)
        s = np.empty((n_out, P))
        _sq_one_minus(s, z)
        q = np.empty((n_out, nt))
        _matmul(q, W, t, nt)
        t_new = np.empty((n_out, nt))
        _mul_into(t_new, s, q, nt)
        a, t = z, t_new
        a_list.append(a)
        t_list.append(t)
        s_list.append(s)
        q_list.append(q)
    WL = np.ascontiguousarray(weights[L - 1], dtype=np.float64)
    bL = np.ascontiguousarray(biases[L - 1], dtype=np.float64)
    v = np.empty((1, P))
    d = np.empty((1, nt))
    _affine(v, WL, bL, a, P)
    _matmul(d, WL, t, nt)
    return v[0].copy(), d[0].copy(), (nt, a_list, t_list, s_list, q_list)


def mlp_backward(weights, biases, workspace, gv, gd):
    nt_py, a_list, t_list, s_list, q_list = workspace
    cdef Py_ssize_t nt = nt_py
    cdef Py_ssize_t L = len(weights)
    cdef Py_ssize_t P = a_list[0].shape[1]
    gv = np.ascontiguousarray(gv, dtype=np.float64)
    gd = np.ascontiguousarray(gd, dtype=np.float64)
    gW = [None] * L
    gb = [None] * L

    WL = np.ascontiguousarray(weights[L - 1], dtype=np.float64)
    a_last = a_list[L - 1]
    t_last = t_list[L - 1]
    cdef const double[:, ::1] a_mv = a_last
    cdef const double[:, ::1] t_mv = t_last
    cdef const double[::1] gv_mv = gv
    cdef const double[::1] gd_mv = gd
    cdef Py_ssize_t n_last = a_last.shape[0]
    gWL = np.empty((1, n_last))
    cdef double[:, ::1] gWL_mv = gWL
    cdef Py_ssize_t i, j, p
    cdef double acc, gbL_acc
    with nogil:
        gbL_acc = 0.0
        for p in range(P):
            gbL_acc += gv_mv[p]
        for j in range(n_last):
            acc = 0.0
            for p in range(P):
                acc += gv_mv[p] * a_mv[j, p]
            for p in range(nt):
                acc += gd_mv[p] * t_mv[j, p]
            gWL_mv[0, j] = acc
    gW[L - 1] = gWL
    gb[L - 1] = np.array([gbL_acc])

    abar = np.empty((n_last, P))
    tbar = np.empty((n_last, nt))
    cdef double[:, ::1] abar_mv = abar
    cdef double[:, ::1] tbar_mv = tbar
    cdef const double[:, ::1] WL_mv = WL
    with nogil:
        for j in range(n_last):
            for p in range(P):
                abar_mv[j, p] = WL_mv[0, j] * gv_mv[p]
            for p in range(nt):
                tbar_mv[j, p] = WL_mv[0, j] * gd_mv[p]

    cdef const double[:, ::1] s_mv, q_mv, acur_mv, aprev_mv, tprev_mv, W_mv
    cdef double[:, ::1] zbar_mv, qbar_mv
    cdef double[:, ::1] gWl_mv
    cdef double[::1] gbl_mv
    cdef Py_ssize_t l, n_out, n_in
    for l in range(L - 2, -1, -1):
        W = np.ascontiguousarray(weights[l], dtype=np.float64)
        n_out = W.shape[0]
        n_in = W.shape[1]
        s = s_list[l]
        q = q_list[l]
        a_cur = a_list[l + 1]
        a_prev = a_list[l]
        t_prev = t_list[l]
        zbar = np.empty((n_out, P))
        qbar = np.empty((n_out, nt))
        s_mv = s
        q_mv = q
        acur_mv = a_cur
        zbar_mv = zbar
        qbar_mv = qbar
        abar_mv = abar
        tbar_mv = tbar
        with nogil:
            for i in range(n_out):
                for p in range(nt):
                    qbar_mv[i, p] = tbar_mv[i, p] * s_mv[i, p]
                    abar_mv[i, p] -= 2.0 * acur_mv[i, p] * tbar_mv[i, p] * q_mv[i, p]
                for p in range(P):
                    zbar_mv[i, p] = abar_mv[i, p] * s_mv[i, p]
        gWl = np.empty((n_out, n_in))
        gbl = np.empty(n_out)
        aprev_mv = a_prev
        tprev_mv = t_prev
        gWl_mv = gWl
        gbl_mv = gbl
        with nogil:
            for i in range(n_out):
                acc = _row_sum(zbar_mv, i, P)
                gbl_mv[i] = acc
                for j in range(n_in):
                    acc = _dot_rows(zbar_mv, i, aprev_mv, j, P)
                    acc += _dot_rows(qbar_mv, i, tprev_mv, j, nt)
                    gWl_mv[i, j] = acc
        gW[l] = gWl
        gb[l] = gbl
        if l > 0:
            abar = np.empty((n_in, P))
            tbar = np.empty((n_in, nt))
            W_mv = W
            _matmul_T(abar, W_mv, zbar_mv, P)
            _matmul_T(tbar, W_mv, qbar_mv, nt)
    return np.concatenate([np.concatenate((w.ravel(), b.ravel())) for w, b in zip(gW, gb)])


# ---------------------------------------------------------------------------
# Counter-based RNG
# ---------------------------------------------------------------------------

cdef void _philox_uniforms(uint64_t seed, uint64_t block, uint64_t path,
                           double* u1, double* u2) noexcept nogil:
    cdef uint64_t c0 = block & MASK32
    cdef uint64_t c1 = (block >> 32) & MASK32
    cdef uint64_t c2 = path & MASK32
    cdef uint64_t c3 = (path >> 32) & MASK32
    cdef uint64_t k0 = seed & MASK32
    cdef uint64_t k1 = (seed >> 32) & MASK32
    cdef uint64_t p0, p1, n0, n1, n2, n3
    cdef int rnd
    for rnd in range(10):
        p0 = M0 * c0
        p1 = M1 * c2
        n0 = (p1 >> 32) ^ c1 ^ k0
        n1 = p1 & MASK32
        n2 = (p0 >> 32) ^ c3 ^ k1
        n3 = p0 & MASK32
        c0, c1, c2, c3 = n0, n1, n2, n3
        if rnd < 9:
            k0 = (k0 + W0) & MASK32
            k1 = (k1 + W1) & MASK32
    u1[0] = <double> (((c0 << 32) | c1) >> 11) * INV53
    u2[0] = <double> (((c2 << 32) | c3) >> 11) * INV53


# ---------------------------------------------------------------------------
# Claim sampling
# ---------------------------------------------------------------------------

cdef double _claim_cdf(double x, const double[::1] coefs, const int64_t[::1] shapes,
                       const double[::1] rates) noexcept nogil:
    cdef double surv = 0.0, t, term, poly
    cdef Py_ssize_t j
    cdef int64_t i
    for j in range(coefs.shape[0]):
        t = rates[j] * x
        term = 1.0
        poly = 1.0
        for i in range(1, shapes[j]):
            term = term * t / i
            poly = poly + term
        surv = surv + coefs[j] * exp(-t) * poly
    return 1.0 - surv


cdef double _invert_claim_cdf(double u, const double[::1] coefs,
                              const int64_t[::1] shapes, const double[::1] rates,
                              double hi0) noexcept nogil:
    cdef double lo = 0.0, hi = hi0, mid
    cdef int doublings = 0
    while _claim_cdf(hi, coefs, shapes, rates) < u and doublings < 64:
        hi *= 2.0
        doublings += 1
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if _claim_cdf(mid, coefs, shapes, rates) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_claims(coefs, shapes, rates, hi0, n, seed, first_path=0):
    cdef const double[::1] coefs_mv = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef const int64_t[::1] shapes_mv = np.ascontiguousarray(shapes, dtype=np.int64)
    cdef const double[::1] rates_mv = np.ascontiguousarray(rates, dtype=np.float64)
    cdef double hi = hi0
    cdef Py_ssize_t count = n
    cdef uint64_t seed_u = <uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t base = <uint64_t> first_path
    out = np.empty(count)
    cdef double[::1] out_mv = out
    cdef Py_ssize_t i
    cdef double u1, u2
    with nogil:
        for i in range(count):
            _philox_uniforms(seed_u, 0, base + <uint64_t> i, &u1, &u2)
            out_mv[i] = _invert_claim_cdf(u2, coefs_mv, shapes_mv, rates_mv, hi)
    return out


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

def simulate_paths(c, lam, r, coefs, shapes, rates, claim_hi,
                   u0, n_paths, horizon, seed, barrier, cutoff, first_path=0):
    cdef const double[::1] coefs_mv = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef const int64_t[::1] shapes_mv = np.ascontiguousarray(shapes, dtype=np.int64)
    cdef const double[::1] rates_mv = np.ascontiguousarray(rates, dtype=np.float64)
    cdef double c_ = c, lam_ = lam, r_ = r, hi = claim_hi
    cdef double u0_ = u0, horizon_ = horizon, barrier_ = barrier, cutoff_ = cutoff
    cdef bint capped = not (barrier_ != barrier_)  # NaN means uncapped
    cdef Py_ssize_t n = n_paths
    cdef uint64_t seed_u = <uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t base = <uint64_t> first_path

    ruined = np.zeros(n, dtype=np.uint8)
    ruin_time = np.zeros(n)
    before = np.zeros(n)
    deficit = np.zeros(n)
    cdef char[::1] ruined_mv = ruined.view(np.int8)
    cdef double[::1] rt_mv = ruin_time
    cdef double[::1] bf_mv = before
    cdef double[::1] df_mv = deficit

    cdef Py_ssize_t pi
    cdef uint64_t block
    cdef double x, t, u1, u2, dt, tn, pre, claim, post
    with nogil:
        for pi in range(n):
            x = u0_
            t = 0.0
            block = 0
            if x >= cutoff_:
                continue
            while True:
                _philox_uniforms(seed_u, block, base + <uint64_t> pi, &u1, &u2)
                block += 1
                dt = -log1p(-u1) / lam_
                tn = t + dt
                if tn > horizon_:
                    break
                if r_ > 0.0:
                    pre = (x + c_ / r_) * exp(r_ * dt) - c_ / r_
                else:
                    pre = x + c_ * dt
                if capped and pre > barrier_:
                    pre = barrier_
                claim = _invert_claim_cdf(u2, coefs_mv, shapes_mv, rates_mv, hi)
                post = pre - claim
                if post < 0.0:
                    ruined_mv[pi] = 1
                    rt_mv[pi] = tn
                    bf_mv[pi] = pre
                    df_mv[pi] = -post
                    break
                x = post
                t = tn
                if x >= cutoff_:
                    break
    return ruined.astype(bool), ruin_time, before, deficit
