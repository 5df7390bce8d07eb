"""Deterministic full-batch minimizers.

L-BFGS (memory 10, two-loop recursion) with a strong Wolfe line search
(c1=1e-4, c2=0.9, bracketing + zoom with cubic interpolation) is the primary
optimizer; Adam with the usual bias-corrected moments is the fallback.  No
randomness anywhere: identical inputs give bitwise identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np


@dataclass(frozen=True)
class LBFGSConfig:
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_iter: int = 5000
    grad_tol: float = 1e-8
    stall_rel_tol: float = 1e-12
    stall_window: int = 5
    max_step_trials: int = 25
    # optional quality target: stop (converged) once the loss falls below it
    loss_tol: float = 0.0


@dataclass(frozen=True)
class AdamConfig:
    step: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations: int = 2000
    grad_tol: float = 1e-8


@dataclass(frozen=True)
class LevenbergMarquardtConfig:
    max_iter: int = 60
    loss_tol: float = 0.0
    damping0: float = 1e-3
    damping_up: float = 4.0
    damping_down: float = 0.25
    damping_max: float = 1e12
    min_rel_improvement: float = 1e-4
    stall_limit: int = 8
    # geodesic acceleration (second-order step correction): lets the iterates
    # follow curved zero-residual valleys with far larger steps
    geodesic: bool = True
    geodesic_h: float = 0.1
    geodesic_alpha: float = 0.75


@dataclass
class OptReport:
    final_loss: float
    iterations: int
    grad_inf_norm: float
    converged: bool
    loss_history: List[float] = field(default_factory=list)
    message: str = ""


def _strong_wolfe(phi, dphi, phi0, dphi0, alpha0, c1, c2, max_trials):
    """Return (alpha, phi(alpha), dphi(alpha), n_trials) or None on failure.

    Bracketing loop plus zoom with cubic interpolation (safeguarded by
    bisection), enforcing phi(a) <= phi0 + c1*a*dphi0 and |dphi(a)| <= -c2*dphi0.
    """
    trials = 0

    def zoom(a_lo, a_hi, f_lo, f_hi, g_lo):
        nonlocal trials
        while trials < max_trials:
            span = a_hi - a_lo
            # minimizer of the quadratic through (a_lo, f_lo, g_lo) and f_hi
            a_j = None
            denom = 2.0 * (f_hi - f_lo - g_lo * span)
            if denom != 0.0:
                a_j = a_lo - g_lo * span * span / denom
            lo, hi = (a_lo, a_hi) if a_lo < a_hi else (a_hi, a_lo)
            margin = 0.1 * (hi - lo)
            if a_j is None or not np.isfinite(a_j) or a_j < lo + margin or a_j > hi - margin:
                a_j = 0.5 * (a_lo + a_hi)
            f_j = phi(a_j)
            trials += 1
            if f_j > phi0 + c1 * a_j * dphi0 or f_j >= f_lo:
                a_hi, f_hi = a_j, f_j
            else:
                g_j = dphi(a_j)
                if abs(g_j) <= -c2 * dphi0:
                    return a_j, f_j, g_j, trials
                if g_j * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, g_lo = a_j, f_j, g_j
            if abs(a_hi - a_lo) < 1e-18 * max(1.0, abs(a_lo)):
                return None
        return None

    a_prev, f_prev, g_prev = 0.0, phi0, dphi0
    a = alpha0
    first = True
    while trials < max_trials:
        f = phi(a)
        trials += 1
        if f > phi0 + c1 * a * dphi0 or (not first and f >= f_prev):
            return zoom(a_prev, a, f_prev, f, g_prev)
        g = dphi(a)
        if abs(g) <= -c2 * dphi0:
            return a, f, g, trials
        if g >= 0.0:
            return zoom(a, a_prev, f, f_prev, g)
        # still descending: extrapolate to the secant zero of the slope
        # (exact for quadratics; clipped growth otherwise)
        if g > g_prev:
            a_next = a - g * (a - a_prev) / (g - g_prev)
        else:
            a_next = 2.0 * a
        a_prev, f_prev, g_prev = a, f, g
        a = float(np.clip(a_next, 1.1 * a, min(100.0 * a, 1e10)))
        first = False
    return None


def lbfgs_minimize(
    f: Callable[[np.ndarray], float],
    g: Callable[[np.ndarray], np.ndarray],
    theta0: np.ndarray,
    config: Optional[LBFGSConfig] = None,
):
    """Minimize f (gradient g) from theta0; returns (theta_best, OptReport)."""
    cfg = config or LBFGSConfig()
    x = np.array(theta0, dtype=float)
    fx = float(f(x))
    gx = np.asarray(g(x), dtype=float)
    history = [fx]
    s_list: List[np.ndarray] = []
    y_list: List[np.ndarray] = []
    rho_list: List[float] = []
    best_x, best_f = x.copy(), fx
    stall = 0
    message = "iteration limit reached"
    converged = False
    n_iter = 0

    def direction(grad):
        q = -grad
        if not s_list:
            return q
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q = q - a * y
        gamma = np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1])
        q = gamma * q
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = rho * np.dot(y, q)
            q = q + s * (a - b)
        return q

    grad_inf = float(np.max(np.abs(gx)))
    if grad_inf < cfg.grad_tol:
        return x, OptReport(fx, 0, grad_inf, True, history, "gradient below tolerance")

    for n_iter in range(1, cfg.max_iter + 1):
        d = direction(gx)
        dg = float(np.dot(gx, d))
        if not np.isfinite(dg) or dg >= 0.0:
            s_list.clear(), y_list.clear(), rho_list.clear()
            d = -gx
            dg = float(np.dot(gx, d))

        def phi(a):
            return float(f(x + a * d))

        def dphi(a):
            return float(np.dot(np.asarray(g(x + a * d)), d))

        alpha0 = 1.0 if s_list else min(1.0, 1.0 / max(1e-12, float(np.sum(np.abs(gx)))))
        hit = _strong_wolfe(phi, dphi, fx, dg, alpha0, cfg.c1, cfg.c2, cfg.max_step_trials)
        if hit is None and s_list:
            # one recovery attempt: restart from steepest descent
            s_list.clear(), y_list.clear(), rho_list.clear()
            d = -gx
            dg = float(np.dot(gx, d))
            alpha0 = min(1.0, 1.0 / max(1e-12, float(np.sum(np.abs(gx)))))
            hit = _strong_wolfe(phi, dphi, fx, dg, alpha0, cfg.c1, cfg.c2, cfg.max_step_trials)
        if hit is None:
            message = "line search failed"
            n_iter -= 1
            break
        alpha, f_new, _, _ = hit
        x_new = x + alpha * d
        g_new = np.asarray(g(x_new), dtype=float)

        s = x_new - x
        y = g_new - gx
        sy = float(np.dot(s, y))
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > cfg.memory:
                s_list.pop(0), y_list.pop(0), rho_list.pop(0)

        decrease = fx - f_new
        x, fx, gx = x_new, f_new, g_new
        history.append(fx)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        grad_inf = float(np.max(np.abs(gx)))
        if grad_inf < cfg.grad_tol:
            message = "gradient below tolerance"
            converged = True
            break
        if cfg.loss_tol > 0.0 and fx <= cfg.loss_tol:
            message = "loss target reached"
            converged = True
            break
        if decrease <= cfg.stall_rel_tol * max(abs(fx), 1e-300):
            stall += 1
            if stall >= cfg.stall_window:
                message = "loss decrease stalled"
                converged = True
                break
        else:
            stall = 0

    if fx > best_f:
        x, fx = best_x, best_f
        gx = np.asarray(g(x), dtype=float)
        grad_inf = float(np.max(np.abs(gx)))
    return x, OptReport(fx, n_iter, grad_inf, converged, history, message)


def levenberg_marquardt(
    residuals_and_jacobian: Callable,
    weights: np.ndarray,
    theta0: np.ndarray,
    config: Optional[LevenbergMarquardtConfig] = None,
    residuals_only: Optional[Callable] = None,
):
    """Damped Gauss-Newton for weighted sums of squared residuals.

    `residuals_and_jacobian(theta)` returns (r, J) with loss = sum w*r^2.
    The normal equations (J'WJ + damping*diag) delta = -J'Wr are solved with a
    Cholesky factorization; the additive scaled damping keeps the system
    positive definite even when J has fewer rows than columns.  When enabled,
    a geodesic-acceleration correction (directional second derivative of the
    residuals along the step, two extra residual evaluations) is added so the
    iterates can follow curved small-residual valleys with large steps.
    Intended as a finishing stage once a first-order method has found the
    basin.
    """
    cfg = config or LevenbergMarquardtConfig()
    w = np.asarray(weights, dtype=float)
    theta = np.array(theta0, dtype=float)
    if residuals_only is None:
        residuals_only = lambda th: residuals_and_jacobian(th)[0]
    r, J = residuals_and_jacobian(theta)
    loss = float(np.dot(w, r * r))
    history = [loss]
    damping = cfg.damping0
    stall = 0
    message = "iteration limit reached"
    converged = False
    n_iter = 0
    for n_iter in range(1, cfg.max_iter + 1):
        if cfg.loss_tol > 0.0 and loss <= cfg.loss_tol:
            message = "loss target reached"
            converged = True
            n_iter -= 1
            break
        A = (J.T * w) @ J
        g = (J.T * w) @ r
        diag = np.maximum(np.diag(A), 1e-12 * max(1.0, float(np.max(np.diag(A)))))
        accepted = False
        while damping <= cfg.damping_max:
            try:
                chol = np.linalg.cholesky(A + damping * np.diag(diag))
            except np.linalg.LinAlgError:
                damping *= cfg.damping_up
                continue
            delta = -np.linalg.solve(chol.T, np.linalg.solve(chol, g))
            if cfg.geodesic:
                h = cfg.geodesic_h
                r_fwd = residuals_only(theta + h * delta)
                r_bwd = residuals_only(theta - h * delta)
                accel_rhs = (r_fwd - 2.0 * r + r_bwd) / (h * h)
                accel = -np.linalg.solve(
                    chol.T, np.linalg.solve(chol, (J.T * w) @ accel_rhs)
                )
                if np.linalg.norm(accel) <= cfg.geodesic_alpha * 2.0 * np.linalg.norm(delta):
                    delta = delta + 0.5 * accel
            trial = theta + delta
            r_new = residuals_only(trial)
            loss_new = float(np.dot(w, r_new * r_new))
            if np.isfinite(loss_new) and loss_new < loss:
                improvement = (loss - loss_new) / max(loss, 1e-300)
                theta, loss = trial, loss_new
                r, J = residuals_and_jacobian(theta)
                damping = max(damping * cfg.damping_down, 1e-14)
                history.append(loss)
                accepted = True
                stall = stall + 1 if improvement < cfg.min_rel_improvement else 0
                break
            damping *= cfg.damping_up
        if not accepted:
            message = "damping exhausted"
            break
        if stall >= cfg.stall_limit:
            message = "progress stalled"
            break
    else:
        n_iter = cfg.max_iter
    if cfg.loss_tol > 0.0 and loss <= cfg.loss_tol:
        message = "loss target reached"
        converged = True
    grad_inf = float(np.max(np.abs(2.0 * (J.T * w) @ r)))
    return theta, OptReport(loss, n_iter, grad_inf, converged, history, message)


def adam_minimize(
    f: Callable[[np.ndarray], float],
    g: Callable[[np.ndarray], np.ndarray],
    theta0: np.ndarray,
    config: Optional[AdamConfig] = None,
):
    """Fixed-budget Adam; returns (theta, OptReport)."""
    cfg = config or AdamConfig()
    x = np.array(theta0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    history = [float(f(x))]
    grad = np.asarray(g(x), dtype=float)
    for k in range(1, cfg.iterations + 1):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        m_hat = m / (1.0 - cfg.beta1**k)
        v_hat = v / (1.0 - cfg.beta2**k)
        x = x - cfg.step * m_hat / (np.sqrt(v_hat) + cfg.eps)
        grad = np.asarray(g(x), dtype=float)
        history.append(float(f(x)))
    grad_inf = float(np.max(np.abs(grad))) if len(grad) else 0.0
    return x, OptReport(
        history[-1], cfg.iterations, grad_inf, grad_inf < cfg.grad_tol, history, "budget exhausted"
    )
