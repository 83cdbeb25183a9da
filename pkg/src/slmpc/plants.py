"""Benchmark plants and their shipped controller settings.

Two desk-scale plants are registered:

* ``cstr`` — the classic two-state exothermic CSTR (concentration and
  temperature states, coolant temperature input). Operated at the unstable
  middle steady state, so every scheme has to actively stabilize it. The
  multi-PID baseline is a concentration-to-temperature cascade: the
  concentration loop sets the temperature setpoint, the temperature loop
  drives the coolant.
* ``aircraft`` — a linear, ill-conditioned, open-loop unstable 4-state /
  2-input pitch-dynamics model (elevator and flaperon driving attack and
  pitch angle). Being exactly linear it doubles as the scheme-equivalence
  reference (sl-mpc and lti-mpc must coincide on it).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PlantModel
from .mpc import MpcConfig
from .sim import PidLoop, PidParams, Scenario

# --- CSTR parameters (per-minute time base) --------------------------------
_Q = 100.0        # feed flow, L/min
_V = 100.0        # reactor volume, L
_RHO = 1000.0     # density, g/L
_CP = 0.239       # heat capacity, J/(g K)
_DHR = -5.0e4     # heat of reaction, J/mol
_EoR = 8750.0     # activation energy / R, K
_K0 = 7.2e10      # pre-exponential factor, 1/min
_UA = 5.0e4       # heat transfer coefficient, J/(min K)
_TF = 350.0       # feed temperature, K
_CAF = 1.0        # feed concentration, mol/L

# steady state at coolant temperature 300 K (Newton-refined; the middle,
# open-loop unstable branch)
CSTR_X_EQ = np.array([0.49991828583669069, 350.00552868096535])
CSTR_U_EQ = np.array([300.0])

# consistent (T, Tc) equilibrium pairs for the scenario's concentration
# setpoints: tracking targets must be steady-state compatible because the
# single coolant input cannot hold an arbitrary (Ca, T) pair
CSTR_T_AT_CA_045 = 352.83309079600673
CSTR_T_AT_CA_050 = 350.00095261911827


def _arrhenius(T):
    return _K0 * np.exp(-_EoR / T)


def _cstr_dynamics(x, u):
    Ca, T = x
    k = _arrhenius(T)
    dCa = _Q / _V * (_CAF - Ca) - k * Ca
    dT = (_Q / _V * (_TF - T)
          + (-_DHR) / (_RHO * _CP) * k * Ca
          + _UA / (_V * _RHO * _CP) * (u[0] - T))
    return np.array([dCa, dT])


def _cstr_output(x, u):
    return np.array([x[0], x[1]])


def _cstr_dfdx(x, u):
    Ca, T = x
    k = _arrhenius(T)
    dkdT = k * _EoR / T ** 2
    heat = (-_DHR) / (_RHO * _CP)
    return np.array([
        [-_Q / _V - k, -Ca * dkdT],
        [heat * k, -_Q / _V + heat * Ca * dkdT - _UA / (_V * _RHO * _CP)],
    ])


def _cstr_dfdu(x, u):
    return np.array([[0.0], [_UA / (_V * _RHO * _CP)]])


def cstr_plant() -> PlantModel:
    return PlantModel(
        n_x=2, n_u=1, n_y=2,
        dynamics=_cstr_dynamics, output=_cstr_output,
        dfdx=_cstr_dfdx, dfdu=_cstr_dfdu,
        dgdx=lambda x, u: np.eye(2), dgdu=lambda x, u: np.zeros((2, 1)),
        name="cstr")


# --- aircraft pitch dynamics ------------------------------------------------
# states: forward velocity, attack angle, pitch rate, pitch angle
# inputs: elevator angle, flaperon angle (both boxed to +/-25 deg)
_AC_A = np.array([
    [-0.0151, -60.5651, 0.0, -32.174],
    [-0.0001, -1.3411, 0.9929, 0.0],
    [0.00018, 43.2541, -0.86939, 0.0],
    [0.0, 0.0, 1.0, 0.0],
])
_AC_B = np.array([
    [-2.516, -13.136],
    [-0.1689, -0.2514],
    [-17.251, -1.5766],
    [0.0, 0.0],
])
_AC_C = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])


def aircraft_plant() -> PlantModel:
    return PlantModel(
        n_x=4, n_u=2, n_y=2,
        dynamics=lambda x, u: _AC_A @ x + _AC_B @ u,
        output=lambda x, u: _AC_C @ x,
        dfdx=lambda x, u: _AC_A, dfdu=lambda x, u: _AC_B,
        dgdx=lambda x, u: _AC_C, dgdu=lambda x, u: np.zeros((2, 2)),
        name="aircraft")


@dataclass(frozen=True)
class Benchmark:
    """A registered plant with its shipped defaults."""

    name: str
    plant: PlantModel
    mpc: MpcConfig
    scenario: Scenario


def cstr_benchmark() -> Benchmark:
    plant = cstr_plant()
    mpc = MpcConfig(
        T=10, Ts=0.02,
        W_y=np.diag([100.0, 1.0]), W_du=np.diag([0.1]),
        r=np.array([0.45, CSTR_T_AT_CA_045]),
        du_min=np.array([-1.0]), du_max=np.array([1.0]),
        u_min=np.array([290.0]), u_max=np.array([310.0]),
    )
    pid_loops = (
        PidLoop(
            name="concentration",
            params=PidParams(gain=40.0, integral_time=1.0, action="direct",
                             out_min=340.0, out_max=360.0, setpoint="reference"),
            measures=0, drives_loop="temperature", init_output=CSTR_X_EQ[1]),
        PidLoop(
            name="temperature",
            params=PidParams(gain=4.0, integral_time=0.5, action="reverse",
                             out_min=290.0, out_max=310.0, setpoint="cascade"),
            measures=1, drives_input=0, init_output=CSTR_U_EQ[0]),
    )
    scenario = Scenario(
        duration=9.0,
        setpoints=(
            (0.0, (0.45, CSTR_T_AT_CA_045)),
            (3.0, (0.5, CSTR_T_AT_CA_050)),
            (6.0, (0.45, CSTR_T_AT_CA_045)),
        ),
        scheme="sl-mpc", relin_period=1,
        x0=tuple(CSTR_X_EQ), u0=tuple(CSTR_U_EQ),
        pid_loops=pid_loops)
    return Benchmark(name="cstr", plant=plant, mpc=mpc, scenario=scenario)


def aircraft_benchmark() -> Benchmark:
    plant = aircraft_plant()
    mpc = MpcConfig(
        T=10, Ts=0.05,
        W_y=np.diag([10.0, 10.0]), W_du=np.diag([0.1, 0.1]),
        r=np.zeros(2),
        du_min=np.array([-10.0, -10.0]), du_max=np.array([10.0, 10.0]),
        u_min=np.array([-25.0, -25.0]), u_max=np.array([25.0, 25.0]),
        y_min=np.array([-0.5, -np.inf]), y_max=np.array([0.5, np.inf]),
    )
    scenario = Scenario(
        duration=8.0,
        setpoints=((0.0, (0.0, 0.0)), (1.0, (0.0, 10.0)), (4.5, (0.0, 0.0))),
        scheme="sl-mpc", relin_period=1,
        x0=(0.0, 0.0, 0.0, 0.0), u0=(0.0, 0.0))
    return Benchmark(name="aircraft", plant=plant, mpc=mpc, scenario=scenario)


PLANTS = {
    "cstr": cstr_benchmark,
    "aircraft": aircraft_benchmark,
}


def get_benchmark(name: str) -> Benchmark:
    try:
        factory = PLANTS[name]
    except KeyError:
        raise KeyError(f"unknown plant {name!r}; registered: {sorted(PLANTS)}") from None
    return factory()
