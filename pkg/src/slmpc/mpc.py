"""Tracking-MPC problem assembly: condensed and sparse QP forms.

Both forms describe the same finite-horizon problem over input increments
z_u = [U_0, ..., U_{T-1}] (U_t is the increment of du at stage t):

    min  1/2 sum_t ||C_hat X_{t+1} - dr||^2_{W_y} + ||U_t||^2_{W_du}
    s.t. X_{t+1} = A_hat X_t + B_hat U_t + e_hat,   X_0 = x0_aug
         du_min <= U_t <= du_max
         u_min - u_c <= du_t <= u_max - u_c
         y_min - y_c <= C_hat X_t <= y_max - y_c   (t = 1..T)

The condensed form eliminates the states (dense Hessian over z_u only);
the sparse form keeps them as decision variables tied by stage equalities.
Constant objective terms are tracked in ``offset`` so the two objective
values are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .model import AugmentedModel


class AssemblyError(ValueError):
    """QP assembly found inconsistent dimensions."""


class SolverError(RuntimeError):
    """A solver result was required to be converged but is not."""


def _weight_matrix(W, n, name):
    W = np.asarray(W, dtype=float)
    if W.ndim == 0:
        W = W * np.eye(n)
    elif W.ndim == 1:
        if W.shape != (n,):
            raise ValueError(f"{name} diagonal must have length {n}")
        W = np.diag(W)
    if W.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {W.shape}")
    if np.abs(W - W.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(W).max()):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (W + W.T)


def _bound_vector(v, n, default, name):
    if v is None:
        return np.full(n, default, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full(n, float(v))
    if v.shape != (n,):
        raise ValueError(f"{name} must have length {n}")
    return v


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, weights, bounds and setpoint of the tracking problem.

    W_y must be symmetric positive semidefinite and W_du symmetric positive
    definite (the strict requirement keeps the condensed Hessian positive
    definite). Bounds may be infinite; matching entries are simply skipped
    during constraint assembly.

    Solver selection knobs (``solver``, ``solver_tol``, ``solver_max_iter``)
    ride along so the simulation layer and CLI can dispatch.
    """

    T: int
    Ts: float
    W_y: np.ndarray
    W_du: np.ndarray
    r: np.ndarray
    du_min: Optional[np.ndarray] = None
    du_max: Optional[np.ndarray] = None
    u_min: Optional[np.ndarray] = None
    u_max: Optional[np.ndarray] = None
    y_min: Optional[np.ndarray] = None
    y_max: Optional[np.ndarray] = None
    solver: str = "cdal-sparse"
    solver_tol: float = 1e-6
    solver_max_iter: int = 200

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("horizon T must be >= 1")
        if self.Ts <= 0:
            raise ValueError("Ts must be > 0")
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        n_y = r.size
        W_y = _weight_matrix(self.W_y, n_y, "W_y")
        eig_y = np.linalg.eigvalsh(W_y)
        if eig_y[0] < -1e-10 * max(1.0, eig_y[-1]):
            raise ValueError("W_y must be positive semidefinite")
        W_du = _weight_matrix(self.W_du, self._n_u_hint(), "W_du")
        eig_du = np.linalg.eigvalsh(W_du)
        if eig_du[0] <= 1e-12 * max(1.0, eig_du[-1]):
            raise ValueError("W_du must be positive definite")
        n_u = W_du.shape[0]
        object.__setattr__(self, "W_y", W_y)
        object.__setattr__(self, "W_du", W_du)
        object.__setattr__(self, "r", r)
        for name, n, default in (
            ("du_min", n_u, -np.inf), ("du_max", n_u, np.inf),
            ("u_min", n_u, -np.inf), ("u_max", n_u, np.inf),
            ("y_min", n_y, -np.inf), ("y_max", n_y, np.inf),
        ):
            object.__setattr__(self, name, _bound_vector(getattr(self, name), n, default, name))
        for lo, hi in (("du_min", "du_max"), ("u_min", "u_max"), ("y_min", "y_max")):
            if np.any(getattr(self, lo) > getattr(self, hi)):
                raise ValueError(f"{lo} must be <= {hi} componentwise")

    def _n_u_hint(self):
        W = np.asarray(self.W_du, dtype=float)
        if W.ndim == 0:
            raise ValueError("W_du must be a vector or matrix (scalar has no dimension)")
        return W.shape[0]

    @property
    def n_u(self):
        return self.W_du.shape[0]

    @property
    def n_y(self):
        return self.W_y.shape[0]

    def with_setpoint(self, r) -> "MpcConfig":
        return replace(self, r=np.asarray(r, dtype=float))


def _check_dims(aug: AugmentedModel, cfg: MpcConfig, x0_aug):
    if cfg.n_u != aug.n_u or cfg.n_y != aug.n_y:
        raise AssemblyError(
            f"config dims (n_u={cfg.n_u}, n_y={cfg.n_y}) do not match model "
            f"(n_u={aug.n_u}, n_y={aug.n_y})"
        )
    x0 = np.asarray(x0_aug, dtype=float).reshape(-1)
    if x0.shape != (aug.n_aug,):
        raise AssemblyError(f"x0_aug must have length {aug.n_aug}, got {x0.shape}")
    return x0


@dataclass(frozen=True)
class PredictionMatrices:
    """Stacked prediction operators: X_stack = M z_u + m, dY_stack = G X_stack."""

    M: np.ndarray
    m: np.ndarray
    G: np.ndarray


def build_prediction_matrices(aug: AugmentedModel, T: int) -> PredictionMatrices:
    """Assemble M, m, G for a T-step horizon by the block recursion
    (each row strip reuses the previous one left-multiplied by A_hat
    instead of forming explicit matrix powers)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    n, m_u = aug.n_aug, aug.n_u
    A, B, e = aug.A_hat, aug.B_hat, aug.e_hat
    M = np.zeros((T * n, T * m_u))
    mvec = np.zeros(T * n)
    M[0:n, 0:m_u] = B
    mvec[0:n] = e
    for i in range(1, T):
        r, pr = i * n, (i - 1) * n
        # leading block advances by one A_hat product; the rest shifts over
        M[r:r + n, 0:m_u] = A @ M[pr:pr + n, 0:m_u]
        M[r:r + n, m_u:(i + 1) * m_u] = M[pr:pr + n, 0:i * m_u]
        mvec[r:r + n] = A @ mvec[pr:pr + n] + e
    G = np.kron(np.eye(T), aug.C_hat)
    return PredictionMatrices(M=M, m=mvec, G=G)


@dataclass(frozen=True)
class CondensedQp:
    """Dense QP over stacked input increments.

        min 1/2 z'Hz + h'z + offset
        s.t. g_l <= G_c z <= g_u,  z_l <= z <= z_u

    Rows of G_c stack the input-accumulation rows first, then the output
    prediction rows; rows whose bounds are both infinite are omitted.
    """

    H: np.ndarray
    h: np.ndarray
    G_c: np.ndarray
    g_l: np.ndarray
    g_u: np.ndarray
    z_l: np.ndarray
    z_u: np.ndarray
    offset: float
    T: int
    n_u: int

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.h @ z + self.offset)


def build_condensed_qp(aug: AugmentedModel, cfg: MpcConfig, x0_aug) -> CondensedQp:
    """Condense the tracking problem into a dense QP over input increments.

    x0_aug is the initial augmented state: zero when the model was just
    relinearized at the current point, or [x - x_c; u_prev - u_c] when a
    fixed linearization is reused.
    """
    x0 = _check_dims(aug, cfg, x0_aug)
    T, n_u, n_y = cfg.T, aug.n_u, aug.n_y
    pred = build_prediction_matrices(aug, T)
    M, G = pred.M, pred.G

    # drift stack including the propagated initial state
    n = aug.n_aug
    m_tilde = np.zeros(T * n)
    prev = x0
    for i in range(T):
        prev = aug.A_hat @ prev + aug.e_hat
        m_tilde[i * n:(i + 1) * n] = prev

    GM = G @ M
    Gm = G @ m_tilde
    Wy_blk = np.kron(np.eye(T), cfg.W_y)
    dr = cfg.r - aug.op.y_c
    resid = Gm - np.tile(dr, T)

    H = GM.T @ Wy_blk @ GM + np.kron(np.eye(T), cfg.W_du)
    H = 0.5 * (H + H.T)
    h = GM.T @ (Wy_blk @ resid)
    offset = 0.5 * float(resid @ Wy_blk @ resid)

    z_l = np.tile(cfg.du_min, T)
    z_u = np.tile(cfg.du_max, T)

    rows, lows, highs = [], [], []
    # input accumulation: du_t = du_prev + sum_{k<=t} U_k
    du_prev = x0[aug.n_x:]
    u_lo = cfg.u_min - aug.op.u_c - du_prev
    u_hi = cfg.u_max - aug.op.u_c - du_prev
    finite_u = np.isfinite(cfg.u_min) | np.isfinite(cfg.u_max)
    if np.any(finite_u):
        S = np.kron(np.tril(np.ones((T, T))), np.eye(n_u))
        for t in range(T):
            for j in range(n_u):
                if finite_u[j]:
                    rows.append(S[t * n_u + j])
                    lows.append(u_lo[j])
                    highs.append(u_hi[j])
    # output prediction rows
    finite_y = np.isfinite(cfg.y_min) | np.isfinite(cfg.y_max)
    if np.any(finite_y):
        y_lo = cfg.y_min - aug.op.y_c
        y_hi = cfg.y_max - aug.op.y_c
        for t in range(T):
            for i in range(n_y):
                if finite_y[i]:
                    k = t * n_y + i
                    rows.append(GM[k])
                    lows.append(y_lo[i] - Gm[k])
                    highs.append(y_hi[i] - Gm[k])

    n_z = T * n_u
    G_c = np.asarray(rows).reshape(len(rows), n_z) if rows else np.zeros((0, n_z))
    return CondensedQp(
        H=H, h=h, G_c=G_c,
        g_l=np.asarray(lows, dtype=float), g_u=np.asarray(highs, dtype=float),
        z_l=z_l, z_u=z_u, offset=offset, T=T, n_u=n_u,
    )


@dataclass(frozen=True)
class SparseQp:
    """Stage-structured QP keeping the states as decision variables.

    Decision vector ordering: [U_0, X_1, U_1, X_2, ..., U_{T-1}, X_T].

        min 1/2 z'H_s z + h_s'z + offset
        s.t. B_s z = b_s
             g_l <= G_s z <= g_u
             z_l <= z <= z_u
    """

    H: np.ndarray
    h: np.ndarray
    B_s: np.ndarray
    b_s: np.ndarray
    G_s: np.ndarray
    g_l: np.ndarray
    g_u: np.ndarray
    z_l: np.ndarray
    z_u: np.ndarray
    offset: float
    T: int
    n_u: int
    n_aug: int

    def u_slice(self, t):
        s = t * (self.n_u + self.n_aug)
        return slice(s, s + self.n_u)

    def x_slice(self, t):
        """Slice of X_{t+1} within the decision vector (t = 0..T-1)."""
        s = t * (self.n_u + self.n_aug) + self.n_u
        return slice(s, s + self.n_aug)

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.h @ z + self.offset)


def build_sparse_qp(aug: AugmentedModel, cfg: MpcConfig, x0_aug) -> SparseQp:
    """Assemble the sparse formulation with the stage dynamics as equality
    constraints (used as the reference form in tests; the CDAL solver works
    from the stage data directly and never needs these stacked matrices)."""
    x0 = _check_dims(aug, cfg, x0_aug)
    T, n_u, n = cfg.T, aug.n_u, aug.n_aug
    n_x, n_y = aug.n_x, aug.n_y
    stride = n_u + n
    n_z = T * stride

    dr = cfg.r - aug.op.y_c
    CtWyC = aug.C_hat.T @ cfg.W_y @ aug.C_hat
    ctwyr = aug.C_hat.T @ (cfg.W_y @ dr)

    H = np.zeros((n_z, n_z))
    h = np.zeros(n_z)
    z_l = np.full(n_z, -np.inf)
    z_u = np.full(n_z, np.inf)
    B_s = np.zeros((T * n, n_z))
    b_s = np.zeros(T * n)

    for t in range(T):
        us = slice(t * stride, t * stride + n_u)
        xs = slice(t * stride + n_u, (t + 1) * stride)
        H[us, us] = cfg.W_du
        H[xs, xs] = CtWyC
        h[xs] = -ctwyr
        z_l[us] = cfg.du_min
        z_u[us] = cfg.du_max
        # input box rides on the du components of X_{t+1}
        z_l[xs.start + n_x:xs.stop] = cfg.u_min - aug.op.u_c
        z_u[xs.start + n_x:xs.stop] = cfg.u_max - aug.op.u_c

        rows = slice(t * n, (t + 1) * n)
        B_s[rows, xs] = np.eye(n)
        B_s[rows, us] = -aug.B_hat
        if t == 0:
            b_s[rows] = aug.A_hat @ x0 + aug.e_hat
        else:
            prev_xs = slice((t - 1) * stride + n_u, t * stride)
            B_s[rows, prev_xs] = -aug.A_hat
            b_s[rows] = aug.e_hat

    rows, lows, highs = [], [], []
    finite_y = np.isfinite(cfg.y_min) | np.isfinite(cfg.y_max)
    if np.any(finite_y):
        y_lo = cfg.y_min - aug.op.y_c
        y_hi = cfg.y_max - aug.op.y_c
        for t in range(T):
            xs = slice(t * stride + n_u, (t + 1) * stride)
            for i in range(n_y):
                if finite_y[i]:
                    row = np.zeros(n_z)
                    row[xs] = aug.C_hat[i]
                    rows.append(row)
                    lows.append(y_lo[i])
                    highs.append(y_hi[i])
    G_s = np.asarray(rows) if rows else np.zeros((0, n_z))

    offset = 0.5 * T * float(dr @ cfg.W_y @ dr)
    return SparseQp(
        H=H, h=h, B_s=B_s, b_s=b_s, G_s=G_s,
        g_l=np.asarray(lows, dtype=float), g_u=np.asarray(highs, dtype=float),
        z_l=z_l, z_u=z_u, offset=offset, T=T, n_u=n_u, n_aug=n,
    )


def rollout(aug: AugmentedModel, x0_aug, u_seq) -> np.ndarray:
    """Propagate the augmented recursion: returns X_1..X_T stacked as (T, n_aug)."""
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    T = u_seq.shape[0]
    X = np.zeros((T, aug.n_aug))
    prev = np.asarray(x0_aug, dtype=float)
    for t in range(T):
        prev = aug.A_hat @ prev + aug.B_hat @ u_seq[t] + aug.e_hat
        X[t] = prev
    return X


def stack_sparse_solution(aug: AugmentedModel, x0_aug, u_seq) -> np.ndarray:
    """Build the sparse-ordering decision vector for a given input sequence."""
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    X = rollout(aug, x0_aug, u_seq)
    parts = []
    for t in range(u_seq.shape[0]):
        parts.append(u_seq[t])
        parts.append(X[t])
    return np.concatenate(parts)


def extract_first_move(sol, aug: AugmentedModel, cfg: MpcConfig, u_prev) -> np.ndarray:
    """Receding-horizon application of the first optimized increment.

    Returns u_prev + U_0 clipped to [u_min, u_max]; at a converged solution
    honoring the input box the clip is a no-op safety net.
    """
    if sol.status != "converged":
        raise SolverError(f"solver did not converge (status: {sol.status})")
    u_prev = np.asarray(u_prev, dtype=float).reshape(aug.n_u)
    u = u_prev + np.asarray(sol.z[:aug.n_u], dtype=float)
    return np.clip(u, cfg.u_min, cfg.u_max)
