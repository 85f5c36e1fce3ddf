"""Tank-mediated task controller.

A PD task force is scaled by a single factor alpha in [0, 1], chosen each
cycle as the value closest to 1 that keeps the predicted tank energy above
its floor.  The floor itself encodes the active body region's energy budget,
so bounding the tank from below bounds the robot's kinetic energy from
above without ever reading the plant's inertia.

Sign convention: f_des and f_c live on the tank port, where the plant
receives -f_c (see robot_dynamics).  A command that physically accelerates
the robot therefore has f_c . xd < 0 and drains the tank; braking commands
refill it.

Discrete-time bookkeeping: the decision at cycle k uses the sampled
velocity, but the actual energy exchanged over [k, k+1) is metered with the
trapezoidal velocity once the next sample is available.  Committing the
previous interval first keeps the ledger within O(tau^2) of the true work,
which the sampled-velocity form cannot do.  A small feasibility margin on
the floor absorbs the half-step difference between the two velocities.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .energy_tank import (
    DAMPER_BAND,
    EPSILON_MIN,
    FLOOR_TOL,
    V_FLOOR,
    TankState,
    commit_step,
    damper_coefficient,
    set_lower_bound,
)
from .errors import ConfigError, EmergencyFault
from .iso15066 import BodyRegion, max_energy

__all__ = [
    "PdGains",
    "PlantObservation",
    "RegionSchedule",
    "ControlTick",
    "SafetyController",
    "pd_force",
    "solve_alpha",
    "project_halfspace",
    "supervise",
]

#: Default slack added to the optimizer's floor so that the committed
#: (trapezoidal) energy cannot undershoot the real floor.
FEASIBILITY_MARGIN = 5e-4


@dataclass(frozen=True)
class PdGains:
    """Per-axis proportional/derivative gains and the pose setpoint."""

    kp: np.ndarray
    kd: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        for label in ("kp", "kd", "target"):
            object.__setattr__(self, label, np.array(getattr(self, label), dtype=float))
        if not (self.kp.shape == self.kd.shape == self.target.shape):
            raise ConfigError("kp, kd and target must have matching shapes")
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ConfigError("PD gains must be non-negative")


@dataclass(frozen=True)
class PlantObservation:
    """Everything the controller is allowed to see: pose, twist, external
    wrench.  Deliberately free of inertia, joint state, or plant internals."""

    x: np.ndarray
    xdot: np.ndarray
    f_e: np.ndarray


def pd_force(gains: PdGains, x, xdot) -> np.ndarray:
    """Plain PD attraction kp (target - x) - kd xd, in the plant frame."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    return gains.kp * (gains.target - x) - gains.kd * xdot


def solve_alpha(f_des, xdot, t_prev: float, epsilon: float,
                tau: float, p_ext: float) -> float:
    """Scaling alpha in [0, 1] closest to 1 with
    tau alpha (f_des . xd) + tau p_ext + t_prev >= epsilon.

    The constraint is affine in alpha, so the optimum is on the boundary or
    at 1.  When no alpha satisfies it the least-draining admissible value is
    returned instead (1 for replenishing commands, 0 otherwise); the caller
    decides whether that situation is a fault or a bound-raise transient.
    """
    f_des = np.asarray(f_des, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    c = tau * float(f_des @ xdot)
    avail = t_prev + tau * p_ext
    if c > 0.0:
        return 1.0
    if c == 0.0:
        # scaling cannot change the tank; pass the command through only if
        # the budget is intact (keeps a starved tank from kicking a resting robot)
        return 1.0 if avail >= epsilon - FLOOR_TOL else 0.0
    if avail + c >= epsilon:
        return 1.0
    alpha = (epsilon - avail) / c
    return min(1.0, max(0.0, alpha))


def project_halfspace(f_des, xdot, t_prev: float, epsilon: float, tau: float,
                      p_ext: float, v_floor: float = V_FLOOR) -> np.ndarray:
    """Nearest force to f_des satisfying the same tank constraint.

    Direction is not preserved: the optimum adds a multiple of xd.  Kept as
    the comparison baseline for the direction-preserving alpha rule.  Below
    v_floor the constraint cannot be met by any force, so the safe zero
    command is returned when f_des is inadmissible.
    """
    f_des = np.asarray(f_des, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    avail = t_prev + tau * p_ext
    slack = tau * float(f_des @ xdot) + avail - epsilon
    if slack >= 0.0:
        return f_des.copy()
    speed_sq = float(xdot @ xdot)
    if speed_sq <= v_floor * v_floor:
        return np.zeros_like(f_des)
    lam = (epsilon - avail - tau * float(f_des @ xdot)) / (tau * speed_sq)
    return f_des + lam * xdot


@dataclass(frozen=True)
class RegionSchedule:
    """Piecewise-constant body-region schedule with derived energy budgets."""

    times: tuple
    regions: tuple
    energies: tuple

    @classmethod
    def from_pairs(cls, pairs) -> "RegionSchedule":
        if not pairs:
            raise ConfigError("schedule cannot be empty")
        times = tuple(float(t) for t, _ in pairs)
        regions = tuple(r for _, r in pairs)
        if times[0] != 0.0:
            raise ConfigError(f"first schedule entry must be at t = 0, got {times[0]!r}")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise ConfigError("switch times must be strictly increasing")
        for region in regions:
            if not isinstance(region, BodyRegion):
                raise ConfigError(f"schedule entries need BodyRegion values, got {region!r}")
        energies = tuple(max_energy(r) for r in regions)
        return cls(times, regions, energies)

    def active_index(self, time: float, slack: float = 0.0) -> int:
        """Index of the region governing ``time``; ``slack`` forgives float
        dust so a switch scripted at a tick boundary lands on that tick."""
        idx = bisect.bisect_right(self.times, time + slack) - 1
        return max(idx, 0)


def supervise(schedule: RegionSchedule, time: float, tank: TankState, *,
              epsilon_min: float = EPSILON_MIN, time_slack: float = 0.0) -> TankState:
    """Retarget the tank floor whenever the scheduled region changed."""
    idx = schedule.active_index(time, time_slack)
    h_bound = schedule.energies[idx]
    expected = tank.t_initial - h_bound + tank.h_initial
    if expected == tank.epsilon:
        return tank
    return set_lower_bound(tank, h_bound, epsilon_min=epsilon_min)


@dataclass(frozen=True)
class ControlTick:
    """One cycle's record, in the column order of the CSV log.

    tank_T is the committed energy the cycle's decision used; h_est is the
    ledger-implied kinetic energy t_initial + h_initial - tank_T. h_truth is
    carried along for logging only and never read by the controller.
    """

    k: int
    t: float
    active_region: str
    alpha: float
    f_des: np.ndarray
    f_c: np.ndarray
    f_e: np.ndarray
    b: float
    p_ext: float
    tank_T: float
    epsilon: float
    h_est: float
    h_truth: float
    x: np.ndarray
    xdot: np.ndarray


@dataclass
class _PendingInterval:
    xdot: np.ndarray
    f_c: np.ndarray
    f_e: np.ndarray
    b: float
    floor: float | None


class SafetyController:
    """Stateful per-cycle controller: supervise, damp, scale, account.

    Owns the tank.  Reads only PlantObservation fields, never the plant; the
    kinetic-energy estimate it logs comes from the tank ledger alone.
    """

    def __init__(self, gains: PdGains, schedule: RegionSchedule, tank: TankState,
                 tau: float, *, feasibility_margin: float = FEASIBILITY_MARGIN,
                 damper_band: float = DAMPER_BAND, v_floor: float = V_FLOOR,
                 epsilon_min: float = EPSILON_MIN):
        if not tau > 0:
            raise ConfigError(f"cycle time must be positive, got {tau!r}")
        if feasibility_margin < 0:
            raise ConfigError("feasibility margin cannot be negative")
        self.gains = gains
        self.schedule = schedule
        self.tank = tank
        self.tau = float(tau)
        self.feasibility_margin = float(feasibility_margin)
        self.damper_band = float(damper_band)
        self.v_floor = float(v_floor)
        self.epsilon_min = float(epsilon_min)
        self._pending: _PendingInterval | None = None
        self._deficit = False
        self._k = 0

    @property
    def cycle_index(self) -> int:
        return self._k

    @property
    def in_deficit(self) -> bool:
        return self._deficit

    def _commit_pending(self, xdot_now: np.ndarray):
        pend = self._pending
        v_mid = 0.5 * (pend.xdot + xdot_now)
        p_task = float(pend.f_c @ v_mid)
        self.tank = commit_step(self.tank, p_task, pend.f_e, v_mid, pend.b,
                                self.tau, floor=pend.floor)
        self._pending = None

    def control_cycle(self, obs: PlantObservation,
                      h_truth: float = float("nan")) -> tuple[np.ndarray, ControlTick]:
        """Run one cycle; returns the wrench to command and the tick record.

        The returned wrench already includes the damper share b xd, so the
        plant applies -(f_c + b xd) + f_e in total.
        """
        t = self._k * self.tau
        xdot = np.asarray(obs.xdot, dtype=float)
        f_e = np.asarray(obs.f_e, dtype=float)

        # settle the previous interval with its trapezoidal velocity first,
        # then let the schedule move the floor for this cycle
        if self._pending is not None:
            self._commit_pending(xdot)
        slack = 0.5 * self.tau
        self.tank = supervise(self.schedule, t, self.tank,
                              epsilon_min=self.epsilon_min, time_slack=slack)
        region = self.schedule.regions[self.schedule.active_index(t, slack)]

        t_now = self.tank.energy
        eps = self.tank.epsilon
        if self._deficit and t_now >= eps:
            self._deficit = False
        elif not self._deficit and t_now < eps - FLOOR_TOL:
            self._deficit = True

        f_des = -pd_force(self.gains, obs.x, xdot)
        b = damper_coefficient(f_e, xdot, self.tank,
                               tol_b=self.damper_band, v_floor=self.v_floor)
        p_ext = -float(f_e @ xdot) + b * float(xdot @ xdot)
        avail = t_now + self.tau * p_ext
        if not self._deficit and avail < eps - FLOOR_TOL:
            raise EmergencyFault(
                f"cycle {self._k}: zero-scale command infeasible "
                f"(T = {t_now!r}, epsilon = {eps!r}, p_ext = {p_ext!r}); "
                "the damper band is too narrow for this wrench")

        alpha = solve_alpha(f_des, xdot, t_now, eps + self.feasibility_margin,
                            self.tau, p_ext)
        f_c = alpha * f_des
        floor = None if self._deficit else eps - self.feasibility_margin - FLOOR_TOL
        self._pending = _PendingInterval(xdot=xdot.copy(), f_c=f_c,
                                         f_e=f_e.copy(), b=b, floor=floor)

        tick = ControlTick(
            k=self._k, t=t, active_region=region.name, alpha=alpha,
            f_des=f_des, f_c=f_c, f_e=f_e.copy(), b=b, p_ext=p_ext,
            tank_T=t_now, epsilon=eps,
            h_est=self.tank.t_initial + self.tank.h_initial - t_now,
            h_truth=float(h_truth), x=np.array(obs.x, dtype=float),
            xdot=xdot.copy(),
        )
        self._k += 1
        return f_c + b * xdot, tick

    def finalize(self, xdot_final: np.ndarray) -> TankState:
        """Commit the last interval once the final velocity sample exists."""
        if self._pending is not None:
            self._commit_pending(np.asarray(xdot_final, dtype=float))
        return self.tank
