"""Scalar modulated energy tank with floor and capacity accounting.

The tank stores T = x_t^2 / 2 and exchanges energy with the robot through
three channels per control interval: the task channel (work done by the
commanded force), the external channel (work done by the environment,
re-routed into the tank with opposite sign), and the emergency damper
channel (always non-negative).  Its lower bound epsilon encodes how much
kinetic energy the robot may still acquire; raising the bound immediately
tightens the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, EmergencyFault

__all__ = [
    "TankState",
    "PowerFlows",
    "make_tank",
    "tank_energy",
    "modulation",
    "damper_coefficient",
    "commit_step",
    "set_lower_bound",
]

#: Committed tank energy may sit below the floor by at most this much.
FLOOR_TOL = 1e-9
#: Default half-width of the band above epsilon in which the damper arms.
DAMPER_BAND = 1e-3
#: Default squared-speed floor below which the damper quotient is unsafe.
V_FLOOR = 1e-6
#: Smallest admissible lower bound; keeps the modulation away from x_t = 0.
EPSILON_MIN = 1e-3


@dataclass(frozen=True)
class TankState:
    """Immutable tank snapshot.

    t_initial and h_initial are the energies at run start; they pin both the
    capacity (t_initial + h_initial, the most the tank can ever legitimately
    hold) and the bound arithmetic in set_lower_bound.  ``discarded``
    accumulates surplus dumped at the capacity so the ledger stays exact.
    """

    x_t: float
    epsilon: float
    t_initial: float
    h_initial: float
    discarded: float = 0.0

    def __post_init__(self):
        if not self.x_t > 0:
            raise EmergencyFault(f"tank state is depleted (x_t = {self.x_t!r})")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.h_initial < 0:
            raise ConfigError("initial kinetic energy cannot be negative")

    @property
    def energy(self) -> float:
        return 0.5 * self.x_t * self.x_t

    @property
    def capacity(self) -> float:
        return self.t_initial + self.h_initial


@dataclass(frozen=True)
class PowerFlows:
    """Decision-time power bookkeeping for one interval (W)."""

    p_task: float
    p_ext_in: float   # f_e . xd, positive when the environment injects
    p_damper: float   # b * xd . xd, never negative
    b: float

    def __post_init__(self):
        if self.p_damper < -1e-15:
            raise EmergencyFault("damper channel cannot extract from the tank")

    @property
    def p_ext(self) -> float:
        """Net external channel as the tank books it."""
        return -self.p_ext_in + self.p_damper


def make_tank(t_initial: float, epsilon: float, h_initial: float = 0.0) -> TankState:
    if not t_initial > 0:
        raise ConfigError(f"initial tank energy must be positive, got {t_initial!r}")
    if epsilon > t_initial + FLOOR_TOL:
        raise ConfigError(
            f"initial tank energy {t_initial!r} is below the floor {epsilon!r}")
    return TankState(x_t=math.sqrt(2.0 * t_initial), epsilon=float(epsilon),
                     t_initial=float(t_initial), h_initial=float(h_initial))


def tank_energy(state: TankState) -> float:
    """T = x_t^2 / 2, the only way energy is read off the tank."""
    return state.energy


def modulation(gamma, state: TankState, floor: float | None = None) -> np.ndarray:
    """Modulation a = gamma / x_t, so the port output a * x_t equals gamma.

    Guards the division against a drained tank; by default the guard level is
    the current floor.  Callers that legitimately operate below epsilon
    (bound raised mid-run) pass an explicit positive ``floor``.
    """
    guard = state.epsilon if floor is None else floor
    if state.energy < guard - FLOOR_TOL:
        raise EmergencyFault(
            f"tank energy {state.energy!r} is under the modulation guard {guard!r}")
    return np.asarray(gamma, dtype=float) / state.x_t


def damper_coefficient(f_e, xdot, state: TankState,
                       tol_b: float = DAMPER_BAND, v_floor: float = V_FLOOR) -> float:
    """Emergency damping coefficient b >= 0.

    Arms only when the environment is injecting power (f_e . xd > 0) while
    the tank sits within tol_b of its floor, and the speed is above v_floor.
    The value f_e.xd / xd.xd makes the damper dissipate exactly the injected
    power, so the tank's external channel books zero net flow.
    """
    f_e = np.asarray(f_e, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    p_in = float(f_e @ xdot)
    speed_sq = float(xdot @ xdot)
    if p_in <= 0.0:
        return 0.0
    if state.energy > state.epsilon + tol_b:
        return 0.0
    if speed_sq <= v_floor * v_floor:
        return 0.0
    return p_in / speed_sq


def commit_step(state: TankState, p_task: float, f_e, xdot, b: float,
                tau: float, floor: float | None = None) -> TankState:
    """Book one interval's flows: T(k) = T(k-1) + tau (p_task - f_e.xd + b xd.xd).

    Surplus beyond the capacity is discarded and recorded.  ``floor`` is the
    energy level below which the commit is treated as an accounting fault;
    pass None while a raised bound is legitimately being worked off.
    """
    f_e = np.asarray(f_e, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    flow = p_task - float(f_e @ xdot) + b * float(xdot @ xdot)
    t_new = state.energy + tau * flow
    if not math.isfinite(t_new):
        raise EmergencyFault("tank update is not finite")
    discard = 0.0
    if t_new > state.capacity:
        discard = t_new - state.capacity
        t_new = state.capacity
    if floor is not None and t_new < floor - FLOOR_TOL:
        raise EmergencyFault(
            f"committed tank energy {t_new!r} fell under the floor {floor!r}; "
            "the optimizer or the damper band is mis-sized")
    if t_new <= 0.0:
        raise EmergencyFault(f"tank depleted: committed energy {t_new!r}")
    return replace(state, x_t=math.sqrt(2.0 * t_new),
                   discarded=state.discarded + discard)


def set_lower_bound(state: TankState, h_bound: float,
                    epsilon_min: float = EPSILON_MIN) -> TankState:
    """Retarget the floor so the robot may acquire at most h_bound of kinetic
    energy: epsilon' = t_initial - h_bound + h_initial.

    Takes effect immediately even if the current energy sits below the new
    floor; the optimizer then only admits replenishing commands until the
    deficit is worked off.
    """
    if not h_bound > 0:
        raise ConfigError(f"energy bound must be positive, got {h_bound!r}")
    eps_new = state.t_initial - h_bound + state.h_initial
    if eps_new < epsilon_min:
        raise ConfigError(
            f"bound {h_bound!r} J needs epsilon = {eps_new!r} J, under the "
            f"minimum {epsilon_min!r} J; start with a larger tank")
    return replace(state, epsilon=eps_new)
