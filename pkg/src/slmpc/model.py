"""Nonlinear plant models and the linearize / reduce / discretize / augment pipeline.

The controller-facing model chain is::

    PlantModel --linearize--> CtLinearModel --reduce_minimal_subset-->
    CtLinearModel --discretize_euler--> DtLinearModel --augment_delta--> AugmentedModel

All model types are immutable after construction; the operations below are
pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class PlantDivergenceError(RuntimeError):
    """Plant state became non-finite during integration."""


class LinearizationError(RuntimeError):
    """A Jacobian entry came out non-finite."""


class ReductionError(RuntimeError):
    """Structural reduction removed every state (no input-to-output path)."""


class FeedthroughError(ValueError):
    """Augmentation rejected a model with direct feedthrough."""


def _as_vector(v, n, name):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def _as_matrix(m, shape, name):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    return m


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time nonlinear plant xdot = f(x, u), y = g(x, u).

    Parameters
    ----------
    n_x, n_u, n_y : int
        State, input and output dimensions.
    dynamics : callable
        f(x, u) -> xdot, returning a length-n_x vector.
    output : callable
        g(x, u) -> y, returning a length-n_y vector.
    dfdx, dfdu, dgdx, dgdu : callable, optional
        Analytic Jacobians evaluated at (x, u). When omitted, linearization
        falls back to central finite differences.
    name : str
        Registry label (cosmetic).
    """

    n_x: int
    n_u: int
    n_y: int
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    output: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dfdx: Optional[Callable] = None
    dfdu: Optional[Callable] = None
    dgdx: Optional[Callable] = None
    dgdu: Optional[Callable] = None
    name: str = ""

    def f(self, x, u):
        return np.asarray(self.dynamics(np.asarray(x, float), np.asarray(u, float)), float).reshape(self.n_x)

    def g(self, x, u):
        return np.asarray(self.output(np.asarray(x, float), np.asarray(u, float)), float).reshape(self.n_y)


@dataclass(frozen=True)
class OperatingPoint:
    """Trajectory point (x_c, u_c, y_c, xdot_c) a linearization is anchored to."""

    x_c: np.ndarray
    u_c: np.ndarray
    y_c: np.ndarray
    xdot_c: np.ndarray

    @classmethod
    def at(cls, model: PlantModel, x, u) -> "OperatingPoint":
        """Build a consistent operating point by evaluating the model at (x, u)."""
        x = _as_vector(x, model.n_x, "x")
        u = _as_vector(u, model.n_u, "u")
        return cls(x_c=x, u_c=u, y_c=model.g(x, u), xdot_c=model.f(x, u))


@dataclass(frozen=True)
class CtLinearModel:
    """Continuous-time linearization: d(dx)/dt = A dx + B du + xdot_c, dy = C dx + D du."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    op: OperatingPoint

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_y(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class DtLinearModel:
    """One-step Euler discretization of a CtLinearModel.

    A_d = I + Ts*A, B_d = Ts*B, C_d = C, D_d = D and drift e = Ts*xdot_c.
    """

    A_d: np.ndarray
    B_d: np.ndarray
    C_d: np.ndarray
    D_d: np.ndarray
    e: np.ndarray
    Ts: float
    op: OperatingPoint

    @property
    def n_x(self):
        return self.A_d.shape[0]

    @property
    def n_u(self):
        return self.B_d.shape[1]

    @property
    def n_y(self):
        return self.C_d.shape[0]


@dataclass(frozen=True)
class AugmentedModel:
    """Delta-form model whose state stacks [dx_t; du_{t-1}] and whose input is
    the increment of du.

    A_hat = [[A_d, B_d], [0, I]], B_hat = [B_d; I], e_hat = [e; 0] and
    C_hat = [C_d, 0] (or [C_d, D_d] when feedthrough folding was requested).
    """

    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    e_hat: np.ndarray
    n_x: int
    n_u: int
    n_y: int
    Ts: float
    op: OperatingPoint

    @property
    def n_aug(self):
        return self.n_x + self.n_u


@dataclass(frozen=True)
class SimResult:
    """Fixed-step trajectory: times, states and outputs row per sample."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray


def _normalize_profile(u_profile, n_u, t_span):
    """Turn the accepted schedule forms into a list of (start_time, u) segments."""
    if u_profile is None:
        segments = [(0.0, np.zeros(n_u))]
    elif isinstance(u_profile, (list, tuple)) and u_profile and isinstance(u_profile[0], (list, tuple)):
        segments = [(float(t0), _as_vector(u, n_u, "u")) for t0, u in u_profile]
    else:
        segments = [(0.0, _as_vector(u_profile, n_u, "u"))]
    times = [s[0] for s in segments]
    if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("input schedule times must start at 0 and be strictly increasing")
    if times[-1] >= t_span + 1e-12:
        raise ValueError("input schedule extends past t_span")
    return segments


def integrate_plant(model: PlantModel, x0, u_profile, t_span: float, dt: float) -> SimResult:
    """Simulate the plant with classic fourth-order Runge-Kutta at fixed step dt.

    Parameters
    ----------
    model : PlantModel
    x0 : array_like
        Initial state.
    u_profile : None, array_like, or sequence of (time, u) pairs
        Piecewise-constant input schedule. A bare vector means a constant
        input; (time, u) breakpoints hold u from each time until the next.
        Every breakpoint and t_span must be a multiple of dt.
    t_span : float
        Total duration.
    dt : float
        Integration step (> 0).

    Returns
    -------
    SimResult
        States sampled every dt with outputs evaluated at each sample.

    Raises
    ------
    PlantDivergenceError
        If the state becomes non-finite, naming the failure time.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = _as_vector(x0, model.n_x, "x0")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    segments = _normalize_profile(u_profile, model.n_u, t_span)

    n_steps = int(round(t_span / dt))
    if abs(n_steps * dt - t_span) > 1e-9 * max(1.0, t_span):
        raise ValueError("dt must divide t_span")
    for t0, _ in segments:
        if abs(round(t0 / dt) * dt - t0) > 1e-9 * max(1.0, t_span):
            raise ValueError("dt must divide every input-schedule breakpoint")

    t = np.arange(n_steps + 1) * dt
    xs = np.empty((n_steps + 1, model.n_x))
    ys = np.empty((n_steps + 1, model.n_y))
    xs[0] = x
    seg = 0
    u = segments[0][1]
    for k in range(n_steps + 1):
        tk = t[k]
        while seg + 1 < len(segments) and tk >= segments[seg + 1][0] - 1e-12:
            seg += 1
            u = segments[seg][1]
        ys[k] = model.g(xs[k], u)
        if k == n_steps:
            break
        xs[k + 1] = _rk4_step(model, xs[k], u, dt)
        if not np.all(np.isfinite(xs[k + 1])):
            raise PlantDivergenceError(f"plant state diverged at t={tk + dt:.6g}")
    return SimResult(t=t, x=xs, y=ys)


def _rk4_step(model: PlantModel, x, u, dt):
    k1 = model.f(x, u)
    k2 = model.f(x + 0.5 * dt * k1, u)
    k3 = model.f(x + 0.5 * dt * k2, u)
    k4 = model.f(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _fd_jacobian(fun, x, u, wrt, n_out, step):
    """Central-difference Jacobian of fun(x, u) w.r.t. x ('x') or u ('u')."""
    base = x if wrt == "x" else u
    J = np.empty((n_out, base.size))
    for j in range(base.size):
        h = step * max(1.0, abs(base[j]))
        vp = base.copy()
        vm = base.copy()
        vp[j] += h
        vm[j] -= h
        if wrt == "x":
            fp, fm = fun(vp, u), fun(vm, u)
        else:
            fp, fm = fun(x, vp), fun(x, vm)
        J[:, j] = (np.asarray(fp, float) - np.asarray(fm, float)) / (2.0 * h)
    return J


def _check_finite(J, name):
    if not np.all(np.isfinite(J)):
        bad = int(np.argwhere(~np.isfinite(J))[0][1])
        raise LinearizationError(f"non-finite entry in Jacobian {name}, column {bad}")
    return J


def linearize(model: PlantModel, op: OperatingPoint, fd_step: float = 1e-6) -> CtLinearModel:
    """Linearize the plant at an operating point.

    Analytic Jacobian callbacks are used where supplied; remaining matrices
    fall back to central finite differences with per-component step
    fd_step * max(1, |component|).
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be > 0")
    x, u = op.x_c, op.u_c

    def jac(cb, fun, wrt, n_out, name):
        if cb is not None:
            J = np.asarray(cb(x, u), float).reshape(n_out, x.size if wrt == "x" else u.size)
        else:
            J = _fd_jacobian(fun, x, u, wrt, n_out, fd_step)
        return _check_finite(J, name)

    A = jac(model.dfdx, model.f, "x", model.n_x, "A")
    B = jac(model.dfdu, model.f, "u", model.n_x, "B")
    C = jac(model.dgdx, model.g, "x", model.n_y, "C")
    D = jac(model.dgdu, model.g, "u", model.n_y, "D")
    return CtLinearModel(A=A, B=B, C=C, D=D, op=op)


def reduce_minimal_subset(ct: CtLinearModel, tol: float = 0.0):
    """Restrict a linear model to the states that both respond to some input
    and influence some output, determined structurally on the sparsity graph
    of (A, B, C) with threshold tol.

    Returns
    -------
    (CtLinearModel, list[int])
        The reduced model and the retained state indices in ascending order.

    Raises
    ------
    ReductionError
        If no state lies on an input-to-output path.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    A, B, C = ct.A, ct.B, ct.C
    n = ct.n_x

    # adjacency: state j feeds state i when |A[i, j]| > tol
    feeds = [np.flatnonzero(np.abs(A[:, j]) > tol) for j in range(n)]
    fed_by = [np.flatnonzero(np.abs(A[i, :]) > tol) for i in range(n)]

    def closure(seed, neighbors):
        seen = set(seed)
        stack = list(seed)
        while stack:
            j = stack.pop()
            for i in neighbors[j]:
                if i not in seen:
                    seen.add(int(i))
                    stack.append(int(i))
        return seen

    from_input = closure(set(np.flatnonzero(np.abs(B).max(axis=1) > tol).tolist()), feeds)
    to_output = closure(set(np.flatnonzero(np.abs(C).max(axis=0) > tol).tolist()), fed_by)
    retained = sorted(from_input & to_output)
    if not retained:
        raise ReductionError("no state is both input-reachable and output-relevant")

    idx = np.asarray(retained, dtype=int)
    op = ct.op
    red_op = OperatingPoint(x_c=op.x_c[idx], u_c=op.u_c, y_c=op.y_c, xdot_c=op.xdot_c[idx])
    reduced = CtLinearModel(
        A=ct.A[np.ix_(idx, idx)],
        B=ct.B[idx, :],
        C=ct.C[:, idx],
        D=ct.D,
        op=red_op,
    )
    return reduced, retained


def discretize_euler(ct: CtLinearModel, Ts: float) -> DtLinearModel:
    """One-step Euler discretization with drift e = Ts * xdot_c."""
    if Ts <= 0:
        raise ValueError("Ts must be > 0")
    n = ct.n_x
    return DtLinearModel(
        A_d=np.eye(n) + Ts * ct.A,
        B_d=Ts * ct.B,
        C_d=ct.C.copy(),
        D_d=ct.D.copy(),
        e=Ts * ct.op.xdot_c,
        Ts=Ts,
        op=ct.op,
    )


def augment_delta(dt: DtLinearModel, fold_feedthrough: bool = False) -> AugmentedModel:
    """Build the delta-form augmented model from a discrete linearization.

    The augmented state is [dx_t; du_{t-1}] and the new input is the input
    increment. Models with direct feedthrough are rejected unless
    fold_feedthrough is set, in which case C_hat = [C_d, D_d]; the fold
    shifts feedthrough by one sample (dy_t sees du_{t-1}).
    """
    n_x, n_u, n_y = dt.n_x, dt.n_u, dt.n_y
    has_d = np.abs(dt.D_d).max(initial=0.0) > 1e-12
    if has_d and not fold_feedthrough:
        raise FeedthroughError(
            "model has direct feedthrough; pass fold_feedthrough=True to fold D into C_hat"
        )
    n = n_x + n_u
    A_hat = np.zeros((n, n))
    A_hat[:n_x, :n_x] = dt.A_d
    A_hat[:n_x, n_x:] = dt.B_d
    A_hat[n_x:, n_x:] = np.eye(n_u)
    B_hat = np.vstack([dt.B_d, np.eye(n_u)])
    C_hat = np.zeros((n_y, n))
    C_hat[:, :n_x] = dt.C_d
    if fold_feedthrough:
        C_hat[:, n_x:] = dt.D_d
    e_hat = np.concatenate([dt.e, np.zeros(n_u)])
    return AugmentedModel(
        A_hat=A_hat, B_hat=B_hat, C_hat=C_hat, e_hat=e_hat,
        n_x=n_x, n_u=n_u, n_y=n_y, Ts=dt.Ts, op=dt.op,
    )
