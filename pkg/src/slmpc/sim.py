"""Closed-loop simulation: multi-PID baseline, successive-linearization MPC
and fixed-linearization (LTI) MPC, plus tracking metrics.

One simulation run is strictly sequential; independent runs can execute in
parallel since they share nothing mutable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .model import (OperatingPoint, PlantDivergenceError, PlantModel,
                    _rk4_step, augment_delta, discretize_euler, linearize,
                    reduce_minimal_subset)
from .mpc import MpcConfig, build_condensed_qp, extract_first_move
from .solvers import (CONVERGED, ActiveSetWorkspace, CdalWorkspace,
                      solve_condensed_activeset, solve_sparse_cdal)

SCHEMES = ("multi-pid", "sl-mpc", "lti-mpc")
SOLVERS = ("cdal-sparse", "activeset-condensed")

PLANT_SUBSTEPS = 10  # RK4 substeps per sampling interval


class SimulationAborted(RuntimeError):
    """Closed-loop run aborted; the partial trace rides on the exception's
    ``trace`` attribute."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class PidParams:
    """PI controller settings.

    action: 'reverse' means the output moves with the error (setpoint minus
    measurement); 'direct' flips the sign. setpoint: 'reference' reads the
    scenario setpoint for the measured channel, 'cascade' takes the driving
    loop's output.
    """

    gain: float
    integral_time: float
    action: str = "reverse"
    out_min: float = -math.inf
    out_max: float = math.inf
    setpoint: str = "reference"

    def __post_init__(self):
        if self.integral_time <= 0:
            raise ValueError("integral_time must be > 0")
        if self.action not in ("direct", "reverse"):
            raise ValueError("action must be 'direct' or 'reverse'")
        if self.out_min > self.out_max:
            raise ValueError("output bounds must be ordered")
        if self.setpoint not in ("reference", "cascade"):
            raise ValueError("setpoint source must be 'reference' or 'cascade'")


@dataclass(frozen=True)
class PidLoop:
    """One loop of the multi-PID scheme: measures an output channel and
    drives either a plant input or a downstream loop's setpoint."""

    name: str
    params: PidParams
    measures: int
    drives_input: Optional[int] = None
    drives_loop: Optional[str] = None
    init_output: Optional[float] = None

    def __post_init__(self):
        if (self.drives_input is None) == (self.drives_loop is None):
            raise ValueError(f"loop {self.name!r} must drive exactly one of: input, loop")


def step_pid(p: PidParams, measurement: float, setpoint: float,
             accumulator: float, dt: float):
    """One PI update. Returns (output, new accumulator).

    Anti-windup by conditional integration: the accumulator freezes while
    the clamped output is saturated in the direction the integral term is
    pushing.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    err = setpoint - measurement
    sign = -1.0 if p.action == "direct" else 1.0
    new_acc = accumulator + err * dt
    raw = sign * p.gain * (err + new_acc / p.integral_time)
    incr = sign * p.gain * err * dt / p.integral_time
    if (raw > p.out_max and incr > 0) or (raw < p.out_min and incr < 0):
        new_acc = accumulator
        raw = sign * p.gain * (err + new_acc / p.integral_time)
    return min(max(raw, p.out_min), p.out_max), new_acc


@dataclass(frozen=True)
class Scenario:
    """What to run: duration, stepwise setpoint schedule, scheme and the
    initial condition. relin_period k relinearizes every k samples in
    sl-mpc mode (1 = every sample, 0 = only at t = 0)."""

    duration: float
    setpoints: tuple
    scheme: str = "sl-mpc"
    relin_period: int = 1
    x0: tuple = ()
    u0: tuple = ()
    pid_loops: tuple = ()
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.relin_period < 0:
            raise ValueError("relin_period must be >= 0")
        sched = tuple((float(t), tuple(float(v) for v in np.atleast_1d(r)))
                      for t, r in self.setpoints)
        if not sched:
            raise ValueError("setpoint schedule must not be empty")
        if sched[0][0] != 0.0:
            raise ValueError("setpoint schedule must start at time 0")
        times = [t for t, _ in sched]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("setpoint schedule times must be strictly increasing")
        if times[-1] >= self.duration:
            raise ValueError("setpoint schedule times must lie within the duration")
        object.__setattr__(self, "setpoints", sched)
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        object.__setattr__(self, "u0", tuple(float(v) for v in np.atleast_1d(self.u0)))

    def setpoint_at(self, t: float) -> np.ndarray:
        r = self.setpoints[0][1]
        for tk, rk in self.setpoints:
            if tk <= t + 1e-12:
                r = rk
            else:
                break
        return np.asarray(r, dtype=float)


@dataclass
class Trace:
    """Closed-loop record, one row per sampling instant."""

    scheme: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    r: np.ndarray
    status: list
    iterations: np.ndarray
    solve_time: np.ndarray
    aborted: bool = False
    error: str = ""

    def __len__(self):
        return self.t.size


class _TraceBuilder:
    def __init__(self, scheme, n_x, n_y, n_u):
        self.scheme = scheme
        self.rows = []
        self.n = (n_x, n_y, n_u)

    def add(self, t, x, y, u, r, status, iters, solve_time):
        self.rows.append((t, np.array(x), np.array(y), np.array(u),
                          np.array(r), status, iters, solve_time))

    def build(self, aborted=False, error=""):
        n_x, n_y, n_u = self.n
        k = len(self.rows)
        tr = Trace(
            scheme=self.scheme,
            t=np.array([row[0] for row in self.rows]),
            x=np.array([row[1] for row in self.rows]).reshape(k, n_x),
            y=np.array([row[2] for row in self.rows]).reshape(k, n_y),
            u=np.array([row[3] for row in self.rows]).reshape(k, n_u),
            r=np.array([row[4] for row in self.rows]).reshape(k, n_y),
            status=[row[5] for row in self.rows],
            iterations=np.array([row[6] for row in self.rows], dtype=int),
            solve_time=np.array([row[7] for row in self.rows]),
            aborted=aborted, error=error)
        return tr


def _integrate_interval(plant: PlantModel, x, u, Ts):
    dt = Ts / PLANT_SUBSTEPS
    for _ in range(PLANT_SUBSTEPS):
        x = _rk4_step(plant, x, u, dt)
    if not np.all(np.isfinite(x)):
        raise PlantDivergenceError("plant state diverged")
    return x


def _build_controller_model(plant, x, u, Ts):
    op = OperatingPoint.at(plant, x, u)
    ct = linearize(plant, op)
    red, idx = reduce_minimal_subset(ct)
    aug = augment_delta(discretize_euler(red, Ts))
    return aug, np.asarray(idx, dtype=int)


def run_closed_loop(plant: PlantModel, cfg: Optional[MpcConfig],
                    scenario: Scenario) -> Trace:
    """Simulate one scheme over the scenario and return the Trace.

    MPC schemes read the full plant state each instant; sl-mpc rebuilds the
    linearization per the relinearization period, lti-mpc keeps the t = 0
    model and feeds the measured offset as the initial augmented state.
    The multi-pid scheme evaluates the cascade PI loops. On a solver
    failure the previous input is held (zero increment); more than 10
    consecutive failures abort the run, as does plant divergence.
    """
    if scenario.scheme == "multi-pid":
        if not scenario.pid_loops:
            raise ValueError("multi-pid scheme requires pid_loops in the scenario")
        return _run_pid(plant, cfg, scenario)
    if cfg is None:
        raise ValueError("MPC schemes require an MpcConfig")
    return _run_mpc(plant, cfg, scenario)


def _noise(rng, std, n):
    if std <= 0:
        return np.zeros(n)
    return rng.normal(0.0, std, n)


def _run_mpc(plant, cfg, scenario):
    Ts = cfg.Ts
    steps = int(round(scenario.duration / Ts))
    x = np.asarray(scenario.x0, dtype=float)
    u_prev = np.asarray(scenario.u0, dtype=float)
    if x.shape != (plant.n_x,) or u_prev.shape != (plant.n_u,):
        raise ValueError("scenario x0/u0 dimensions do not match the plant")
    rng = np.random.default_rng(scenario.seed)
    tb = _TraceBuilder(scenario.scheme, plant.n_x, plant.n_y, plant.n_u)

    if cfg.solver not in SOLVERS:
        raise ValueError(f"unknown solver {cfg.solver!r}")
    use_cdal = cfg.solver == "cdal-sparse"
    ws = CdalWorkspace() if use_cdal else ActiveSetWorkspace()

    aug, idx = _build_controller_model(plant, x, u_prev, Ts)
    fail_streak = 0
    for k in range(steps):
        tk = k * Ts
        r = scenario.setpoint_at(tk)
        if scenario.scheme == "sl-mpc" and scenario.relin_period >= 1 \
                and k % scenario.relin_period == 0 and k > 0:
            aug, idx = _build_controller_model(plant, x, u_prev, Ts)
        x0_aug = np.concatenate([x[idx] - aug.op.x_c, u_prev - aug.op.u_c])
        cfg_k = cfg.with_setpoint(r)
        t0 = time.perf_counter()
        if use_cdal:
            sol = solve_sparse_cdal(aug, cfg_k, x0_aug, ws=ws,
                                    tol=cfg.solver_tol, max_outer=cfg.solver_max_iter)
        else:
            qp = build_condensed_qp(aug, cfg_k, x0_aug)
            sol = solve_condensed_activeset(qp, ws=ws, tol=cfg.solver_tol,
                                            max_iter=cfg.solver_max_iter)
        solve_time = time.perf_counter() - t0

        y = plant.g(x, u_prev) + _noise(rng, scenario.noise_std, plant.n_y)
        if sol.status == CONVERGED:
            u = extract_first_move(sol, aug, cfg_k, u_prev)
            fail_streak = 0
        else:
            # zero-increment fallback: hold the previous input
            u = np.clip(u_prev, cfg.u_min, cfg.u_max)
            fail_streak += 1
        assert np.all(u >= cfg.u_min - 1e-9) and np.all(u <= cfg.u_max + 1e-9)
        tb.add(tk, x, y, u, r, sol.status, sol.iterations[0], solve_time)
        if fail_streak > 10:
            raise SimulationAborted(
                f"{fail_streak} consecutive non-converged solves at t={tk:.6g}",
                tb.build(aborted=True, error="solver-failure"))
        try:
            x = _integrate_interval(plant, x, u, Ts)
        except PlantDivergenceError:
            raise SimulationAborted(
                f"plant diverged during interval starting t={tk:.6g}",
                tb.build(aborted=True, error="divergence"))
        u_prev = u
    return tb.build()


def _run_pid(plant, cfg, scenario):
    loops = scenario.pid_loops
    names = [lp.name for lp in loops]
    if len(set(names)) != len(names):
        raise ValueError("pid loop names must be unique")
    driver_of = {}
    for lp in loops:
        if lp.drives_loop is not None:
            if lp.drives_loop not in names:
                raise ValueError(f"loop {lp.name!r} drives unknown loop {lp.drives_loop!r}")
            driver_of[lp.drives_loop] = lp.name
    for lp in loops:
        if lp.params.setpoint == "cascade":
            if lp.name not in driver_of:
                raise ValueError(f"cascade loop {lp.name!r} has no driving loop")
            if names.index(driver_of[lp.name]) >= names.index(lp.name):
                raise ValueError(f"loop {lp.name!r} must come after its driver")

    Ts = cfg.Ts if cfg is not None else scenario.duration / 1000.0
    steps = int(round(scenario.duration / Ts))
    x = np.asarray(scenario.x0, dtype=float)
    u_prev = np.asarray(scenario.u0, dtype=float)
    rng = np.random.default_rng(scenario.seed)
    tb = _TraceBuilder(scenario.scheme, plant.n_x, plant.n_y, plant.n_u)

    # bumpless start: seed accumulators so each loop's first output matches
    # its declared initial output (the initial plant input by default)
    acc = {}
    y0 = plant.g(x, u_prev)
    r0 = scenario.setpoint_at(0.0)
    out0 = {}
    for lp in loops:
        sp0 = r0[lp.measures] if lp.params.setpoint == "reference" else out0.get(driver_of.get(lp.name), y0[lp.measures])
        init = lp.init_output
        if init is None:
            init = u_prev[lp.drives_input] if lp.drives_input is not None else y0[lp.measures]
        sign = -1.0 if lp.params.action == "direct" else 1.0
        err0 = sp0 - y0[lp.measures]
        acc[lp.name] = lp.params.integral_time * (init / (sign * lp.params.gain) - err0)
        out0[lp.name] = init

    for k in range(steps):
        tk = k * Ts
        r = scenario.setpoint_at(tk)
        y = plant.g(x, u_prev) + _noise(rng, scenario.noise_std, plant.n_y)
        u = u_prev.copy()
        outputs = {}
        for lp in loops:
            if lp.params.setpoint == "reference":
                sp = r[lp.measures]
            else:
                sp = outputs[driver_of[lp.name]]
            out, acc[lp.name] = step_pid(lp.params, y[lp.measures], sp, acc[lp.name], Ts)
            outputs[lp.name] = out
            if lp.drives_input is not None:
                u[lp.drives_input] = out
        if cfg is not None:
            u = np.clip(u, cfg.u_min, cfg.u_max)
            assert np.all(u >= cfg.u_min - 1e-9) and np.all(u <= cfg.u_max + 1e-9)
        tb.add(tk, x, y, u, r, "n/a", 0, 0.0)
        try:
            x = _integrate_interval(plant, x, u, Ts)
        except PlantDivergenceError:
            raise SimulationAborted(
                f"plant diverged during interval starting t={tk:.6g}",
                tb.build(aborted=True, error="divergence"))
        u_prev = u
    return tb.build()


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class SegmentMetrics:
    """Per setpoint segment and output channel."""

    channel: int
    start: float
    end: float
    step: float
    ise: float
    overshoot: float
    settling_time: float


@dataclass(frozen=True)
class MetricsReport:
    ise: np.ndarray
    segments: tuple
    violation_count: int
    max_violation: float
    mean_iterations: float
    mean_solve_ms: float

    def overshoot(self, channel: int) -> float:
        vals = [s.overshoot for s in self.segments if s.channel == channel]
        return max(vals) if vals else 0.0

    def settling_time(self, channel: int) -> float:
        vals = [s.settling_time for s in self.segments
                if s.channel == channel and not math.isnan(s.settling_time)]
        return max(vals) if vals else math.nan


def compute_metrics(trace: Trace, schedule, y_min=None, y_max=None) -> MetricsReport:
    """Tracking metrics per output channel and per setpoint segment:
    integral squared error, peak overshoot beyond the new setpoint, 2%%
    settling time (threshold 2%% of the step magnitude) and output
    constraint violations. Schedule times are interpreted relative to the
    trace start, so metrics are invariant under a uniform time shift."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    tau = trace.t - trace.t[0]
    Ts = tau[1] - tau[0] if len(trace) > 1 else 0.0
    n_y = trace.y.shape[1]
    sched = [(float(t), np.atleast_1d(np.asarray(r, dtype=float))) for t, r in schedule]

    err = trace.y - trace.r
    ise = (err ** 2).sum(axis=0) * Ts

    segments = []
    bounds_t = [t for t, _ in sched] + [math.inf]
    for si, (t_start, r_vec) in enumerate(sched):
        t_end = bounds_t[si + 1]
        mask = (tau >= t_start - 1e-12) & (tau < t_end - 1e-12)
        if not mask.any():
            continue
        seg_y = trace.y[mask]
        seg_r = trace.r[mask]
        seg_tau = tau[mask]
        for ch in range(n_y):
            target = r_vec[ch]
            if si == 0:
                base = seg_y[0, ch]
            else:
                base = sched[si - 1][1][ch]
            step = target - base
            e = seg_y[:, ch] - target
            seg_ise = float((e ** 2).sum() * Ts)
            if step > 0:
                overshoot = max(0.0, float(seg_y[:, ch].max() - target))
            elif step < 0:
                overshoot = max(0.0, float(target - seg_y[:, ch].min()))
            else:
                overshoot = 0.0
            if step == 0.0:
                settle = 0.0
            else:
                thr = 0.02 * abs(step)
                inside = np.abs(e) <= thr
                settle = math.nan
                for i in range(len(inside)):
                    if inside[i:].all():
                        settle = float(seg_tau[i] - t_start)
                        break
            segments.append(SegmentMetrics(
                channel=ch, start=t_start,
                end=float(seg_tau[-1] + Ts), step=float(step),
                ise=seg_ise, overshoot=overshoot, settling_time=settle))

    viol_count = 0
    max_viol = 0.0
    if y_min is not None or y_max is not None:
        lo = np.full(n_y, -math.inf) if y_min is None else np.asarray(y_min, dtype=float)
        hi = np.full(n_y, math.inf) if y_max is None else np.asarray(y_max, dtype=float)
        over = np.maximum(trace.y - hi, 0.0)
        under = np.maximum(lo - trace.y, 0.0)
        viol = np.maximum(over, under)
        viol_count = int((viol > 0).sum())
        max_viol = float(viol.max(initial=0.0))

    return MetricsReport(
        ise=ise, segments=tuple(segments),
        violation_count=viol_count, max_violation=max_viol,
        mean_iterations=float(trace.iterations.mean()) if len(trace) else 0.0,
        mean_solve_ms=float(trace.solve_time.mean() * 1e3) if len(trace) else 0.0,
    )
