"""Compiled inner kernels for the coordinate-descent augmented-Lagrangian solver.

Everything here works on preallocated buffers and the stage matrices
(A_hat, B_hat, C_hat, e_hat) only; no kernel allocates and no horizon-wide
matrix ever appears. Array layout:

    U      (T, m)   input increments
    X      (T, n)   augmented states X_1..X_T (X[t] is the state after stage t)
    c_res  (T, n)   equality residuals X[t] - A X[t-1] - B U[t] - e
    s_res  (T, p)   output values C X[t]
    lam    (T, n)   equality multipliers; mup/mum (T, p) inequality pairs
"""

import numpy as np
from numba import njit


@njit(cache=True)
def recompute_residuals(U, X, x0, A, B, C, e, c_res, s_res):
    T, m = U.shape
    n = X.shape[1]
    p = s_res.shape[1]
    for t in range(T):
        for i in range(n):
            acc = X[t, i] - e[i]
            if t == 0:
                for j in range(n):
                    acc -= A[i, j] * x0[j]
            else:
                for j in range(n):
                    acc -= A[i, j] * X[t - 1, j]
            for j in range(m):
                acc -= B[i, j] * U[t, j]
            c_res[t, i] = acc
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += C[i, j] * X[t, j]
            s_res[t, i] = acc


@njit(cache=True)
def compute_precond(rho, A, B, C, Wdu, CtWyC, hi_mask, lo_mask,
                    diag_u, diag_x_mid, diag_x_last):
    """Jacobi scalars: the diagonal of the AL Hessian contribution per
    coordinate (inequality curvature counted whenever the channel has any
    finite bound, which upper-bounds the active-piece curvature)."""
    n = A.shape[0]
    m = B.shape[1]
    p = C.shape[0]
    for k in range(m):
        s = 0.0
        for i in range(n):
            s += B[i, k] * B[i, k]
        diag_u[k] = Wdu[k, k] + rho * s
    for k in range(n):
        sA = 0.0
        for i in range(n):
            sA += A[i, k] * A[i, k]
        sC = 0.0
        for i in range(p):
            if hi_mask[i] or lo_mask[i]:
                sC += C[i, k] * C[i, k]
        base = CtWyC[k, k] + rho * (1.0 + sC)
        diag_x_last[k] = base
        diag_x_mid[k] = base + rho * sA


@njit(cache=True, inline="always")
def _proj_residual(pos, lo, hi, g):
    """KKT residual of one box-constrained coordinate with gradient g."""
    if pos <= lo:
        return -g if g < 0.0 else 0.0
    if pos >= hi:
        return g if g > 0.0 else 0.0
    return g if g > 0.0 else -g


@njit(cache=True)
def _grad_u(t, k, U, lam_hat, rho, c_res, B, Wdu):
    m = U.shape[1]
    n = c_res.shape[1]
    g = 0.0
    for j in range(m):
        g += Wdu[k, j] * U[t, j]
    for i in range(n):
        g -= B[i, k] * (lam_hat[t, i] + rho * c_res[t, i])
    return g


@njit(cache=True)
def _grad_x(t, k, X, lam_hat, mup_hat, mum_hat, rho, c_res, s_res,
            A, C, CtWyC, ctwyr, y_lo, y_hi, lo_mask, hi_mask):
    T = X.shape[0]
    n = X.shape[1]
    p = s_res.shape[1]
    g = -ctwyr[k]
    for j in range(n):
        g += CtWyC[k, j] * X[t, j]
    g += lam_hat[t, k] + rho * c_res[t, k]
    if t + 1 < T:
        for i in range(n):
            g -= A[i, k] * (lam_hat[t + 1, i] + rho * c_res[t + 1, i])
    for i in range(p):
        ci = C[i, k]
        if ci != 0.0:
            if hi_mask[i]:
                v = mup_hat[t, i] + rho * (s_res[t, i] - y_hi[i])
                if v > 0.0:
                    g += ci * v
            if lo_mask[i]:
                v = mum_hat[t, i] + rho * (y_lo[i] - s_res[t, i])
                if v > 0.0:
                    g -= ci * v
    return g


@njit(cache=True)
def cd_sweeps(U, X, x0, lam_hat, mup_hat, mum_hat, rho,
              A, B, C, e, Wdu, CtWyC, ctwyr,
              du_lo, du_hi, xu_lo, xu_hi, y_lo, y_hi, hi_mask, lo_mask,
              diag_u, diag_x_mid, diag_x_last, c_res, s_res,
              scale_u, scale_x, n_x, omega, inner_tol, change_tol, max_sweeps):
    """Cyclic coordinate descent on the AL subproblem in stage order
    U_0, X_1, U_1, X_2, ... with per-coordinate clipping. Returns the sweep
    count and the last sweep's max projected-gradient residual (reported in
    original units via the equilibration scales).

    omega is a projected-SOR relaxation factor; any value in (0, 2) is safe
    for the box-constrained quadratic subproblem (Cryer) and values near 2
    cut the sweep count roughly by the square root of the conditioning."""
    T, m = U.shape
    n = X.shape[1]
    p = s_res.shape[1]
    res = np.inf
    sweeps = 0
    for _ in range(max_sweeps):
        max_r = 0.0
        max_d = 0.0
        for t in range(T):
            for k in range(m):
                g = _grad_u(t, k, U, lam_hat, rho, c_res, B, Wdu)
                old = U[t, k]
                lo = du_lo[k]
                hi = du_hi[k]
                r = _proj_residual(old, lo, hi, g) / scale_u[k]
                if r > max_r:
                    max_r = r
                new = old - omega * g / diag_u[k]
                if new < lo:
                    new = lo
                elif new > hi:
                    new = hi
                d = new - old
                if d != 0.0:
                    U[t, k] = new
                    ad = -d if d < 0.0 else d
                    if ad > max_d:
                        max_d = ad
                    for i in range(n):
                        c_res[t, i] -= B[i, k] * d
            for k in range(n):
                g = _grad_x(t, k, X, lam_hat, mup_hat, mum_hat, rho, c_res, s_res,
                            A, C, CtWyC, ctwyr, y_lo, y_hi, lo_mask, hi_mask)
                old = X[t, k]
                if k >= n_x:
                    lo = xu_lo[k - n_x]
                    hi = xu_hi[k - n_x]
                else:
                    lo = -np.inf
                    hi = np.inf
                r = _proj_residual(old, lo, hi, g) / scale_x[k]
                if r > max_r:
                    max_r = r
                dk = diag_x_mid[k] if t + 1 < T else diag_x_last[k]
                new = old - omega * g / dk
                if new < lo:
                    new = lo
                elif new > hi:
                    new = hi
                d = new - old
                if d != 0.0:
                    X[t, k] = new
                    ad = -d if d < 0.0 else d
                    if ad > max_d:
                        max_d = ad
                    c_res[t, k] += d
                    if t + 1 < T:
                        for i in range(n):
                            c_res[t + 1, i] -= A[i, k] * d
                    for i in range(p):
                        s_res[t, i] += C[i, k] * d
        sweeps += 1
        res = max_r
        if max_r <= inner_tol or max_d <= change_tol:
            break
    return sweeps, res


@njit(cache=True)
def eval_dual_residual(U, X, lam_hat, mup_hat, mum_hat, rho,
                       A, B, C, Wdu, CtWyC, ctwyr,
                       du_lo, du_hi, xu_lo, xu_hi, y_lo, y_hi, hi_mask, lo_mask,
                       c_res, s_res, scale_u, scale_x, n_x):
    """Exact max projected-gradient residual at the current point (no updates),
    in original units.

    With the AL gradient evaluated at multipliers (lam_hat + rho*c, ...) this
    equals the Lagrangian stationarity residual at the post-update multipliers.
    """
    T, m = U.shape
    n = X.shape[1]
    max_r = 0.0
    for t in range(T):
        for k in range(m):
            g = _grad_u(t, k, U, lam_hat, rho, c_res, B, Wdu)
            r = _proj_residual(U[t, k], du_lo[k], du_hi[k], g) / scale_u[k]
            if r > max_r:
                max_r = r
        for k in range(n):
            g = _grad_x(t, k, X, lam_hat, mup_hat, mum_hat, rho, c_res, s_res,
                        A, C, CtWyC, ctwyr, y_lo, y_hi, lo_mask, hi_mask)
            if k >= n_x:
                lo = xu_lo[k - n_x]
                hi = xu_hi[k - n_x]
            else:
                lo = -np.inf
                hi = np.inf
            r = _proj_residual(X[t, k], lo, hi, g) / scale_x[k]
            if r > max_r:
                max_r = r
    return max_r


@njit(cache=True)
def residual_norms(c_res, s_res, y_lo, y_hi, lo_mask, hi_mask, d_scale, s_scale):
    """Max stage-equality residual and max output-constraint violation, both
    mapped back to original units by the equilibration scales."""
    T, n = c_res.shape
    p = s_res.shape[1]
    primal = 0.0
    viol = 0.0
    for t in range(T):
        for i in range(n):
            a = c_res[t, i] * d_scale[i]
            if a < 0.0:
                a = -a
            if a > primal:
                primal = a
        for i in range(p):
            if hi_mask[i]:
                v = (s_res[t, i] - y_hi[i]) * s_scale[i]
                if v > viol:
                    viol = v
            if lo_mask[i]:
                v = (y_lo[i] - s_res[t, i]) * s_scale[i]
                if v > viol:
                    viol = v
    return primal, viol


@njit(cache=True)
def dual_update(c_res, s_res, y_lo, y_hi, lo_mask, hi_mask,
                lam, lam_hat, mup, mup_hat, mum, mum_hat, rho, beta):
    """Accelerated multiplier step: gradient ascent from the extrapolated
    point, then Nesterov-type extrapolation with factor beta (beta = 0 gives
    the plain update). Inequality multipliers stay clamped at zero."""
    T, n = c_res.shape
    p = s_res.shape[1]
    for t in range(T):
        for i in range(n):
            new = lam_hat[t, i] + rho * c_res[t, i]
            hat = new + beta * (new - lam[t, i])
            lam[t, i] = new
            lam_hat[t, i] = hat
        for i in range(p):
            if hi_mask[i]:
                v = mup_hat[t, i] + rho * (s_res[t, i] - y_hi[i])
                new = v if v > 0.0 else 0.0
                hat = new + beta * (new - mup[t, i])
                if hat < 0.0:
                    hat = 0.0
                mup[t, i] = new
                mup_hat[t, i] = hat
            if lo_mask[i]:
                v = mum_hat[t, i] + rho * (y_lo[i] - s_res[t, i])
                new = v if v > 0.0 else 0.0
                hat = new + beta * (new - mum[t, i])
                if hat < 0.0:
                    hat = 0.0
                mum[t, i] = new
                mum_hat[t, i] = hat


@njit(cache=True)
def tracking_cost(U, s_res, Wdu, Wy, dr):
    """Cost of the tracking problem at the current iterate (matches the
    assembled QP objectives including their constant offsets)."""
    T, m = U.shape
    p = s_res.shape[1]
    obj = 0.0
    for t in range(T):
        for i in range(p):
            di = s_res[t, i] - dr[i]
            acc = 0.0
            for j in range(p):
                acc += Wy[i, j] * (s_res[t, j] - dr[j])
            obj += 0.5 * di * acc
        for k in range(m):
            acc = 0.0
            for l in range(m):
                acc += Wdu[k, l] * U[t, l]
            obj += 0.5 * U[t, k] * acc
    return obj
