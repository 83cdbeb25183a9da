"""QP solvers: construction-free CDAL on the stage data, a warm-started
primal active-set method on the condensed form, and a brute-force KKT
enumeration oracle for testing.

The CDAL path never assembles a QP: it receives the augmented model, the
config and the initial state, and works stage by stage (outer accelerated
augmented-Lagrangian updates, inner cyclic coordinate descent with
per-coordinate clipping). Its largest arrays are O(T * n_aug); an
allocation hook (``set_alloc_hook``) lets tests audit that no horizon-wide
(T*n)^2 object is ever created.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _cdal
from .model import AugmentedModel
from .mpc import CondensedQp, MpcConfig, _check_dims

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE = "infeasible"

_alloc_hook = None


def set_alloc_hook(hook):
    """Install a callable receiving the element count of every array the
    CDAL path allocates (None clears it). Test hook for the matrix-free
    memory contract."""
    global _alloc_hook
    _alloc_hook = hook


def _new(*shape, dtype=float):
    arr = np.zeros(shape, dtype=dtype)
    if _alloc_hook is not None:
        _alloc_hook(arr.size)
    return arr


def _equilibrate(A, B, C, iters=8, lo=1e-4, hi=1e4):
    """Diagonal scales (states d, inputs g, outputs s) balancing the stage
    data: the solver runs on D^-1 A D, D^-1 B G, S^-1 C D. An exact,
    invertible reformulation; residuals are mapped back to original units."""
    n = A.shape[0]
    m = B.shape[1]
    p = C.shape[0]
    d = np.ones(n)
    g = np.ones(m)
    s = np.ones(p)
    for _ in range(iters):
        At = A / d[:, None] * d[None, :]
        Bt = B / d[:, None] * g[None, :]
        Ct = C / s[:, None] * d[None, :]
        rn = np.abs(At).max(axis=1)
        if m:
            rn = np.maximum(rn, np.abs(Bt).max(axis=1))
        cn = np.abs(At).max(axis=0)
        if p:
            cn = np.maximum(cn, np.abs(Ct).max(axis=0))
        f = np.sqrt(np.maximum(rn, 1e-12) / np.maximum(cn, 1e-12))
        d = np.clip(d * f, lo, hi)
        if m:
            gn = np.abs(B / d[:, None]).max(axis=0) * g
            g = np.clip(g / np.sqrt(np.maximum(gn, 1e-12)), lo, hi)
        if p:
            sn = np.abs(C * d[None, :]).max(axis=1) / s
            s = np.clip(s * np.sqrt(np.maximum(sn, 1e-12)), lo, hi)
    return d, g, s


@dataclass
class QpSolution:
    """Solver output. ``iterations`` counts (outer, inner) work: AL outer
    rounds and CD sweeps for CDAL, pivots and KKT solves for the active-set
    method. ``info`` carries solver-specific extras (residual history,
    final working set and multipliers)."""

    z: np.ndarray
    objective: float
    status: str
    iterations: tuple
    solve_time: float
    primal_res: float
    dual_res: float
    info: dict = field(default_factory=dict)


class CdalWorkspace:
    """Warm-start state carried across sampling instants: multipliers for the
    stage equalities and the clamped output-inequality pairs, the penalty,
    the previous primal iterate and the Jacobi preconditioner scalars.

    rho0=None picks the initial penalty at the level where the objective and
    constraint curvatures meet, which is where the coordinate-descent inner
    loop conditions best."""

    def __init__(self, rho0: Optional[float] = None, rho_max: float = 1e8):
        self.rho0 = None if rho0 is None else float(rho0)
        self.rho_max = float(rho_max)
        self.rho = 1.0
        self.dims = None

    def reset(self):
        self.dims = None

    def _ensure(self, T, n, m, p, n_x):
        dims = (T, n, m, p, n_x)
        if self.dims == dims:
            return False
        self.dims = dims
        self.U = _new(T, m)
        self.X = _new(T, n)
        self.lam = _new(T, n)
        self.lam_hat = _new(T, n)
        self.mup = _new(T, p)
        self.mup_hat = _new(T, p)
        self.mum = _new(T, p)
        self.mum_hat = _new(T, p)
        self.c_res = _new(T, n)
        self.s_res = _new(T, p)
        # stage-sized problem data buffers, refreshed every solve
        self.A = _new(n, n)
        self.B = _new(n, m)
        self.C = _new(p, n)
        self.e = _new(n)
        self.Wdu = _new(m, m)
        self.Wy = _new(p, p)
        self.CtWyC = _new(n, n)
        self.ctwyr = _new(n)
        self.dr = _new(p)
        self.x0 = _new(n)
        self._tmp_pn = _new(p, n)
        self.du_lo = _new(m)
        self.du_hi = _new(m)
        self.xu_lo = _new(m)
        self.xu_hi = _new(m)
        self.y_lo = _new(p)
        self.y_hi = _new(p)
        self.hi_mask = _new(p, dtype=np.bool_)
        self.lo_mask = _new(p, dtype=np.bool_)
        self.diag_u = _new(m)
        self.diag_x_mid = _new(n)
        self.diag_x_last = _new(n)
        self.d_scale = _new(n)
        self.g_scale = _new(m)
        self.s_scale = _new(p)
        self.d_scale[:] = 1.0
        self.g_scale[:] = 1.0
        self.s_scale[:] = 1.0
        return True

    def _bind(self, aug: AugmentedModel, cfg: MpcConfig, x0):
        d, g, sy = _equilibrate(aug.A_hat, aug.B_hat, aug.C_hat)
        # keep warm-start state meaningful in original units across rebinds
        if not (np.array_equal(d, self.d_scale) and np.array_equal(g, self.g_scale)
                and np.array_equal(sy, self.s_scale)):
            self.U *= self.g_scale / g
            self.X *= self.d_scale / d
            self.lam *= d / self.d_scale
            self.lam_hat *= d / self.d_scale
            for buf in (self.mup, self.mup_hat, self.mum, self.mum_hat):
                buf *= sy / self.s_scale
            np.copyto(self.d_scale, d)
            np.copyto(self.g_scale, g)
            np.copyto(self.s_scale, sy)
        d, g, sy = self.d_scale, self.g_scale, self.s_scale

        np.copyto(self.A, aug.A_hat / d[:, None] * d[None, :])
        np.copyto(self.B, aug.B_hat / d[:, None] * g[None, :])
        np.copyto(self.C, aug.C_hat / sy[:, None] * d[None, :])
        np.copyto(self.e, aug.e_hat / d)
        np.copyto(self.Wdu, cfg.W_du * g[:, None] * g[None, :])
        np.copyto(self.Wy, cfg.W_y * sy[:, None] * sy[None, :])
        np.copyto(self.x0, x0 / d)
        np.subtract(cfg.r, aug.op.y_c, out=self.dr)
        self.dr /= sy
        np.dot(self.Wy, self.C, out=self._tmp_pn)
        np.dot(self.C.T, self._tmp_pn, out=self.CtWyC)
        np.dot(self._tmp_pn.T, self.dr, out=self.ctwyr)
        np.copyto(self.du_lo, cfg.du_min / g)
        np.copyto(self.du_hi, cfg.du_max / g)
        np.copyto(self.xu_lo, (cfg.u_min - aug.op.u_c) / d[aug.n_x:])
        np.copyto(self.xu_hi, (cfg.u_max - aug.op.u_c) / d[aug.n_x:])
        np.copyto(self.y_lo, (cfg.y_min - aug.op.y_c) / sy)
        np.copyto(self.y_hi, (cfg.y_max - aug.op.y_c) / sy)
        np.copyto(self.hi_mask, np.isfinite(cfg.y_max))
        np.copyto(self.lo_mask, np.isfinite(cfg.y_min))


def solve_sparse_cdal(aug: AugmentedModel, cfg: MpcConfig, x0_aug,
                      ws: Optional[CdalWorkspace] = None,
                      tol: float = 1e-6, max_outer: int = 200) -> QpSolution:
    """Solve the tracking problem directly from the stage data.

    Outer loop: accelerated augmented-Lagrangian updates on the stage
    equality multipliers and clamped updates on the output-inequality
    multipliers, with the penalty stepped up tenfold whenever the equality
    residual stalls (less than a 10x drop per pass). Inner loop: cyclic
    coordinate descent over the stage-ordered variables with box clipping,
    Jacobi-preconditioned, capped at 500 sweeps with early exit on a 1e-8
    coordinate-change norm. Converged when the stage equality residual,
    the output-constraint violation and the dual (stationarity) residual
    are all below tol in the infinity norm.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    t_start = time.perf_counter()
    x0 = _check_dims(aug, cfg, x0_aug)
    if ws is None:
        ws = CdalWorkspace()
    T, n, m, p = cfg.T, aug.n_aug, aug.n_u, aug.n_y
    fresh = ws._ensure(T, n, m, p, aug.n_x)
    ws._bind(aug, cfg, x0)
    if fresh:
        ws.rho = ws.rho0 if ws.rho0 is not None else float(
            np.clip(max(ws.CtWyC.diagonal().max(initial=0.0),
                        ws.Wdu.diagonal().max(initial=0.0)), 1.0, 1e4))
    _cdal.compute_precond(ws.rho, ws.A, ws.B, ws.C, ws.Wdu, ws.CtWyC,
                          ws.hi_mask, ws.lo_mask,
                          ws.diag_u, ws.diag_x_mid, ws.diag_x_last)
    _cdal.recompute_residuals(ws.U, ws.X, ws.x0, ws.A, ws.B, ws.C, ws.e,
                              ws.c_res, ws.s_res)
    np.copyto(ws.lam_hat, ws.lam)
    np.copyto(ws.mup_hat, ws.mup)
    np.copyto(ws.mum_hat, ws.mum)

    alpha = 1.0
    prev_primal = np.inf
    prev_combined = np.inf
    status = MAX_ITERATIONS
    outer_residuals = []
    total_sweeps = 0
    outers = 0
    primal_eq = viol = dual_res = np.inf
    rho_ceiling = ws.rho_max
    inner_sick = 0
    # penalty level where objective and constraint curvatures meet: the CD
    # inner loop conditions best in this neighborhood
    rho_balance = float(np.clip(max(ws.CtWyC.diagonal().max(initial=0.0),
                                    ws.Wdu.diagonal().max(initial=0.0)), 1.0, 1e4))
    dual0 = _cdal.eval_dual_residual(
        ws.U, ws.X, ws.lam_hat, ws.mup_hat, ws.mum_hat, ws.rho,
        ws.A, ws.B, ws.C, ws.Wdu, ws.CtWyC, ws.ctwyr,
        ws.du_lo, ws.du_hi, ws.xu_lo, ws.xu_hi, ws.y_lo, ws.y_hi,
        ws.hi_mask, ws.lo_mask, ws.c_res, ws.s_res,
        ws.g_scale, ws.d_scale, aug.n_x)
    prev_combined = max(10.0 * tol, 0.5 * dual0)
    # mild over-relaxation is provably safe for the pure box-QP subproblem;
    # fall back to plain steps when clamped output-inequality terms are
    # present (aggressive factors chatter against the clipping)
    omega = 1.0 if (ws.hi_mask.any() or ws.lo_mask.any()) else 1.4

    for outer in range(max_outer):
        outers = outer + 1
        inner_tol = max(0.2 * tol, 0.1 * prev_combined)
        sweeps, _ = _cdal.cd_sweeps(
            ws.U, ws.X, ws.x0, ws.lam_hat, ws.mup_hat, ws.mum_hat, ws.rho,
            ws.A, ws.B, ws.C, ws.e, ws.Wdu, ws.CtWyC, ws.ctwyr,
            ws.du_lo, ws.du_hi, ws.xu_lo, ws.xu_hi, ws.y_lo, ws.y_hi,
            ws.hi_mask, ws.lo_mask, ws.diag_u, ws.diag_x_mid, ws.diag_x_last,
            ws.c_res, ws.s_res, ws.g_scale, ws.d_scale, aug.n_x,
            omega, inner_tol, 1e-13, 500)
        total_sweeps += sweeps
        _cdal.recompute_residuals(ws.U, ws.X, ws.x0, ws.A, ws.B, ws.C, ws.e,
                                  ws.c_res, ws.s_res)
        dual_res = _cdal.eval_dual_residual(
            ws.U, ws.X, ws.lam_hat, ws.mup_hat, ws.mum_hat, ws.rho,
            ws.A, ws.B, ws.C, ws.Wdu, ws.CtWyC, ws.ctwyr,
            ws.du_lo, ws.du_hi, ws.xu_lo, ws.xu_hi, ws.y_lo, ws.y_hi,
            ws.hi_mask, ws.lo_mask, ws.c_res, ws.s_res,
            ws.g_scale, ws.d_scale, aug.n_x)
        primal_eq, viol = _cdal.residual_norms(ws.c_res, ws.s_res, ws.y_lo, ws.y_hi,
                                               ws.lo_mask, ws.hi_mask,
                                               ws.d_scale, ws.s_scale)
        combined = max(primal_eq, viol, dual_res)
        outer_residuals.append(combined)
        if combined <= tol:
            # plain final update so the stored multipliers match the solution
            _cdal.dual_update(ws.c_res, ws.s_res, ws.y_lo, ws.y_hi, ws.lo_mask,
                              ws.hi_mask, ws.lam, ws.lam_hat, ws.mup, ws.mup_hat,
                              ws.mum, ws.mum_hat, ws.rho, 0.0)
            status = CONVERGED
            break

        primal_metric = max(primal_eq, viol)
        if combined > 0.999 * prev_combined:
            # momentum overshoot: kill the extrapolation
            alpha = 1.0
            beta = 0.0
        else:
            alpha_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * alpha * alpha))
            beta = (alpha - 1.0) / alpha_next
            alpha = alpha_next
        _cdal.dual_update(ws.c_res, ws.s_res, ws.y_lo, ws.y_hi, ws.lo_mask,
                          ws.hi_mask, ws.lam, ws.lam_hat, ws.mup, ws.mup_hat,
                          ws.mum, ws.mum_hat, ws.rho, beta)
        # Penalty adaptation. Up tenfold when the equality residual stalls and
        # the inner loop solved its subproblem (a stall with an unsolved
        # subproblem says nothing about the multiplier iteration). Down once
        # the inner loop proves persistently unable to solve at the current
        # conditioning; that level becomes a ceiling for this solve.
        rho_changed = False
        if sweeps >= 500 and dual_res > inner_tol:
            inner_sick += 1
            if inner_sick >= 3:
                # steer toward the balance point; above it a lower penalty
                # conditions better, below it a higher one does
                if ws.rho > 3.0 * rho_balance:
                    rho_ceiling = min(rho_ceiling, ws.rho * 0.99)
                    ws.rho = ws.rho / 10.0
                    rho_changed = True
                elif ws.rho < 0.3 * rho_balance and ws.rho * 10.0 <= rho_ceiling:
                    ws.rho = ws.rho * 10.0
                    rho_changed = True
                inner_sick = 0
        else:
            inner_sick = 0
            if (dual_res <= inner_tol and primal_metric > 0.1 * prev_primal
                    and primal_metric > tol and ws.rho * 10.0 <= rho_ceiling):
                ws.rho = min(ws.rho * 10.0, ws.rho_max)
                rho_changed = True
        if rho_changed:
            _cdal.compute_precond(ws.rho, ws.A, ws.B, ws.C, ws.Wdu, ws.CtWyC,
                                  ws.hi_mask, ws.lo_mask,
                                  ws.diag_u, ws.diag_x_mid, ws.diag_x_last)
            alpha = 1.0
            np.copyto(ws.lam_hat, ws.lam)
            np.copyto(ws.mup_hat, ws.mup)
            np.copyto(ws.mum_hat, ws.mum)
        prev_primal = primal_metric
        prev_combined = combined

    z = _new(T * (m + n))
    for t in range(T):
        s = t * (m + n)
        z[s:s + m] = ws.U[t] * ws.g_scale
        z[s + m:s + m + n] = ws.X[t] * ws.d_scale
    objective = float(_cdal.tracking_cost(ws.U, ws.s_res, ws.Wdu, ws.Wy, ws.dr))
    return QpSolution(
        z=z, objective=objective, status=status,
        iterations=(outers, total_sweeps),
        solve_time=time.perf_counter() - t_start,
        primal_res=float(max(primal_eq, viol)), dual_res=float(dual_res),
        info={"outer_residuals": outer_residuals, "rho": ws.rho},
    )


# ---------------------------------------------------------------------------
# condensed-form active-set method


@dataclass
class ActiveSetWorkspace:
    """Warm-start state: the working set (constraint ids with bound side),
    the previous solution, and a per-solve cache of assembled working-set
    KKT systems."""

    working_set: list = field(default_factory=list)
    z_prev: Optional[np.ndarray] = None
    kkt_cache: dict = field(default_factory=dict)


def _constraint_row(qp: CondensedQp, kind, idx):
    if kind == "b":
        row = np.zeros(qp.H.shape[0])
        row[idx] = 1.0
        return row
    return qp.G_c[idx]


def _constraint_bound(qp: CondensedQp, kind, idx, side):
    if kind == "b":
        return qp.z_u[idx] if side > 0 else qp.z_l[idx]
    return qp.g_u[idx] if side > 0 else qp.g_l[idx]


def _restore_feasibility(G, g_l, g_u, z_l, z_u, z, feas_tol, max_sweeps=5000):
    """Coordinate descent on the squared general-constraint violation over the
    variable box. Returns (z, feasible). A stall above tolerance certifies
    infeasibility (the violation function is convex)."""
    z = np.clip(z, z_l, z_u)
    if G.shape[0] == 0:
        return z, True
    Gz = G @ z
    colsq = (G * G).sum(axis=0)
    viol = max(np.maximum(Gz - g_u, 0.0).max(initial=0.0),
               np.maximum(g_l - Gz, 0.0).max(initial=0.0))
    for _ in range(max_sweeps):
        if viol <= 0.5 * feas_tol:
            return z, True
        moved = 0.0
        for j in range(z.size):
            if colsq[j] <= 0.0:
                continue
            excess = np.maximum(Gz - g_u, 0.0) - np.maximum(g_l - Gz, 0.0)
            grad = G[:, j] @ excess
            if grad == 0.0:
                continue
            new = min(max(z[j] - grad / colsq[j], z_l[j]), z_u[j])
            d = new - z[j]
            if d != 0.0:
                z[j] = new
                Gz += G[:, j] * d
                moved = max(moved, abs(d))
        viol = max(np.maximum(Gz - g_u, 0.0).max(initial=0.0),
                   np.maximum(g_l - Gz, 0.0).max(initial=0.0))
        if moved <= 1e-13:
            break
    return z, viol <= feas_tol


def solve_condensed_activeset(qp: CondensedQp, ws: Optional[ActiveSetWorkspace] = None,
                              tol: float = 1e-6, max_iter: int = 200) -> QpSolution:
    """Primal active-set method with working-set warm start.

    Each iteration solves the equality-constrained subproblem on the current
    working set, then either steps to the nearest blocking constraint or
    drops the most negative multiplier. Terminates when the step vanishes
    and all multipliers are >= -tol. Pivots that would push the working-set
    conditioning beyond 1e12 are rejected.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    t_start = time.perf_counter()
    if ws is None:
        ws = ActiveSetWorkspace()
    H, h = qp.H, qp.h
    n = h.size
    kkt_solves = 0
    pivots = 0
    ws.kkt_cache.clear()

    # feasible start: previous solution clipped into the box, repaired for
    # the general rows if necessary
    z = ws.z_prev.copy() if ws.z_prev is not None and ws.z_prev.size == n else np.zeros(n)
    feas_tol = max(tol, 1e-9)
    z, ok = _restore_feasibility(qp.G_c, qp.g_l, qp.g_u, qp.z_l, qp.z_u, z, feas_tol)
    if not ok:
        return QpSolution(
            z=z, objective=qp.objective(z), status=INFEASIBLE,
            iterations=(0, 0), solve_time=time.perf_counter() - t_start,
            primal_res=np.inf, dual_res=np.inf)

    act_tol = 1e-7 * max(1.0, np.abs(z).max(initial=0.0))
    work: list = []
    rows: list = []
    for kind, idx, side in ws.working_set:
        if kind == "b" and idx >= n:
            continue
        if kind == "g" and idx >= qp.G_c.shape[0]:
            continue
        a = _constraint_row(qp, kind, idx)
        b = _constraint_bound(qp, kind, idx, side)
        if not np.isfinite(b) or abs(a @ z - b) > act_tol:
            continue
        cand = rows + [a]
        if len(cand) > n:
            continue
        sv = np.linalg.svd(np.asarray(cand), compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            continue
        work.append((kind, idx, side))
        rows.append(a)

    def kkt_solve(work_rows, g):
        nonlocal kkt_solves
        kkt_solves += 1
        k = len(work_rows)
        key = tuple(work)
        K = ws.kkt_cache.get(key)
        if K is None:
            K = np.zeros((n + k, n + k))
            K[:n, :n] = H
            if k:
                A = np.asarray(work_rows)
                K[:n, n:] = A.T
                K[n:, :n] = A
            ws.kkt_cache[key] = K
        rhs = np.concatenate([-g, np.zeros(k)])
        sol = np.linalg.solve(K, rhs)
        return sol[:n], sol[n:]

    status = MAX_ITERATIONS
    lam_report = np.zeros(0)
    at_minimum = False  # set after a full unblocked step: z minimizes on W
    for _ in range(max_iter):
        g = H @ z + h
        p, nu = kkt_solve(rows, g)
        if at_minimum or np.abs(p).max(initial=0.0) <= 1e-11 * max(1.0, np.abs(z).max(initial=0.0)):
            # stationary on the working set: check multiplier signs
            at_minimum = False
            lam = np.array([side * nu[i] for i, (_, _, side) in enumerate(work)])
            lam_report = lam
            if lam.size == 0 or lam.min() >= -tol:
                status = CONVERGED
                break
            worst = int(np.argmin(lam))
            work.pop(worst)
            rows.pop(worst)
            pivots += 1
            continue
        # ratio test against all constraints not in the working set
        alpha = 1.0
        blocking = None
        in_work = set((k_, i_) for k_, i_, _ in work)
        for kind, count in (("b", n), ("g", qp.G_c.shape[0])):
            for idx in range(count):
                if (kind, idx) in in_work:
                    continue
                a = _constraint_row(qp, kind, idx)
                d = float(a @ p)
                if abs(d) <= 1e-12:
                    continue
                val = float(a @ z)
                if d > 0:
                    b = _constraint_bound(qp, kind, idx, +1)
                    side = +1
                else:
                    b = _constraint_bound(qp, kind, idx, -1)
                    side = -1
                if not np.isfinite(b):
                    continue
                # distance to the bound ahead of the motion; roundoff can make
                # it marginally negative at an already-active constraint
                ratio = (b - val) / d
                if ratio < 0.0:
                    ratio = 0.0
                if ratio < alpha - 1e-14:
                    # a pivot that would wreck working-set conditioning still
                    # caps the step, it just cannot enter the working set
                    alpha = ratio
                    cand = rows + [a]
                    sv = np.linalg.svd(np.asarray(cand), compute_uv=False)
                    if len(cand) > n or sv[-1] <= 1e-12 * sv[0]:
                        blocking = None
                    else:
                        blocking = (kind, idx, side, a)
        z = z + alpha * p
        pivots += 1
        if blocking is not None:
            kind, idx, side, a = blocking
            work.append((kind, idx, side))
            rows.append(a)
            at_minimum = False
        else:
            at_minimum = alpha == 1.0

    # primal feasibility at exit
    feas = 0.0
    if qp.G_c.shape[0]:
        Gz = qp.G_c @ z
        feas = max(np.maximum(Gz - qp.g_u, 0.0).max(initial=0.0),
                   np.maximum(qp.g_l - Gz, 0.0).max(initial=0.0))
    feas = max(feas, np.maximum(z - qp.z_u, 0.0).max(initial=0.0),
               np.maximum(qp.z_l - z, 0.0).max(initial=0.0))
    grad = H @ z + h
    dual = grad.copy()
    for i, (kind, idx, side) in enumerate(work):
        if lam_report.size == len(work):
            dual += lam_report[i] * side * _constraint_row(qp, kind, idx)
    dual_res = float(np.abs(dual).max(initial=0.0)) if status == CONVERGED else np.inf

    ws.working_set = list(work)
    ws.z_prev = z.copy()
    return QpSolution(
        z=z.copy(), objective=qp.objective(z), status=status,
        iterations=(pivots, kkt_solves),
        solve_time=time.perf_counter() - t_start,
        primal_res=float(feas), dual_res=dual_res,
        info={"working_set": list(work),
              "multipliers": lam_report.copy()})


# ---------------------------------------------------------------------------
# brute-force enumeration oracle


def solve_oracle_bruteforce(qp: CondensedQp) -> QpSolution:
    """Enumerate every candidate active set (all subsets of the one-sided
    constraints up to the variable count), solve each KKT system, filter by
    primal feasibility and dual nonnegativity and return the feasible
    candidate with least objective. Intended purely as a test oracle; the
    finite one-sided constraint count must not exceed 20."""
    t_start = time.perf_counter()
    H, h = qp.H, qp.h
    n = h.size
    cons = []
    for j in range(n):
        if np.isfinite(qp.z_l[j]):
            a = np.zeros(n)
            a[j] = 1.0
            cons.append((a, qp.z_l[j], -1))
        if np.isfinite(qp.z_u[j]):
            a = np.zeros(n)
            a[j] = 1.0
            cons.append((a, qp.z_u[j], +1))
    for i in range(qp.G_c.shape[0]):
        if np.isfinite(qp.g_l[i]):
            cons.append((qp.G_c[i], qp.g_l[i], -1))
        if np.isfinite(qp.g_u[i]):
            cons.append((qp.G_c[i], qp.g_u[i], +1))
    if len(cons) > 20:
        raise ValueError(f"oracle limited to 20 one-sided constraints, got {len(cons)}")

    def feasible(z):
        for a, b, side in cons:
            v = a @ z
            if side > 0 and v > b + 1e-9:
                return False
            if side < 0 and v < b - 1e-9:
                return False
        return True

    best = None
    solves = 0
    for k in range(min(n, len(cons)) + 1):
        for subset in itertools.combinations(range(len(cons)), k):
            A = np.asarray([cons[i][0] for i in subset]).reshape(k, n)
            b = np.asarray([cons[i][1] for i in subset])
            sides = np.asarray([cons[i][2] for i in subset])
            K = np.zeros((n + k, n + k))
            K[:n, :n] = H
            K[:n, n:] = A.T
            K[n:, :n] = A
            rhs = np.concatenate([-h, b])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            solves += 1
            z, nu = sol[:n], sol[n:]
            if k and np.abs(A @ z - b).max() > 1e-8:
                continue
            lam = sides * nu
            if k and lam.min(initial=0.0) < -1e-9:
                continue
            if not feasible(z):
                continue
            obj = qp.objective(z)
            if best is None or obj < best[0] - 1e-12:
                best = (obj, z, lam)
    if best is None:
        return QpSolution(
            z=np.zeros(n), objective=np.inf, status=INFEASIBLE,
            iterations=(solves, 0), solve_time=time.perf_counter() - t_start,
            primal_res=np.inf, dual_res=np.inf)
    obj, z, lam = best
    return QpSolution(
        z=z, objective=obj, status=CONVERGED, iterations=(solves, 0),
        solve_time=time.perf_counter() - t_start, primal_res=0.0, dual_res=0.0,
        info={"multipliers": lam})
