"""Simulated force-driven plants: a constant-inertia Cartesian point mass
and a planar two-link arm.

Both plants integrate with fixed-step semi-implicit Euler (velocity first,
pose with the new velocity), which keeps long-run energy drift second order
in the step size.  The port seen by a controller is Cartesian: a commanded
wrench plus an external wrench in, a pose/twist snapshot out.  The commanded
wrench enters with a minus sign, i.e. the plant advances

    Lambda xdd + S xd = -f_c + f_e

so that tank bookkeeping and plant work use one sign convention.  Gravity on
the arm is simulated and exactly compensated inside the wrapper; the
Cartesian port therefore behaves like a gravity-free model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IntegrationFault

__all__ = [
    "PlantState",
    "WrenchInput",
    "CartesianPlant",
    "PlanarArm",
    "power_balance_residual",
]


@dataclass(frozen=True)
class PlantState:
    """Immutable snapshot of a plant: pose, twist, true kinetic energy, time."""

    x: np.ndarray
    xdot: np.ndarray
    kinetic_energy_truth: float
    time: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=float))
        object.__setattr__(self, "xdot", np.array(self.xdot, dtype=float))
        if self.kinetic_energy_truth < 0:
            raise DomainError("kinetic energy cannot be negative")


@dataclass(frozen=True)
class WrenchInput:
    """One control interval's wrenches: commanded f_c and external f_e."""

    f_c: np.ndarray
    f_e: np.ndarray

    def __post_init__(self):
        f_c = np.array(self.f_c, dtype=float)
        f_e = np.array(self.f_e, dtype=float)
        if f_c.shape != f_e.shape:
            raise DomainError(f"wrench shapes differ: {f_c.shape} vs {f_e.shape}")
        if not (np.all(np.isfinite(f_c)) and np.all(np.isfinite(f_e))):
            raise DomainError("wrench entries must be finite")
        object.__setattr__(self, "f_c", f_c)
        object.__setattr__(self, "f_e", f_e)


def _check_tau(tau: float):
    if not tau > 0:
        raise DomainError(f"step size must be positive, got {tau!r}")


class CartesianPlant:
    """Point mass with constant symmetric positive-definite inertia Lambda."""

    def __init__(self, inertia, x0, xdot0, time0: float = 0.0):
        lam = np.atleast_2d(np.asarray(inertia, dtype=float))
        if lam.shape[0] != lam.shape[1]:
            raise DomainError(f"inertia must be square, got {lam.shape}")
        if np.max(np.abs(lam - lam.T)) > 1e-12 * max(np.max(np.abs(lam)), 1.0):
            raise DomainError("inertia must be symmetric")
        try:
            np.linalg.cholesky(lam)
        except np.linalg.LinAlgError:
            raise DomainError("inertia must be positive definite") from None
        self.inertia = lam
        self._lam_inv = np.linalg.inv(lam)
        self.m = lam.shape[0]
        self._x = np.array(x0, dtype=float)
        self._xdot = np.array(xdot0, dtype=float)
        if self._x.shape != (self.m,) or self._xdot.shape != (self.m,):
            raise DomainError("x0/xdot0 dimensions do not match the inertia")
        self._time = float(time0)

    @property
    def pose(self) -> np.ndarray:
        return self._x.copy()

    @property
    def twist(self) -> np.ndarray:
        return self._xdot.copy()

    @property
    def time(self) -> float:
        return self._time

    @property
    def kinetic_energy(self) -> float:
        return 0.5 * float(self._xdot @ self.inertia @ self._xdot)

    def state(self) -> PlantState:
        return PlantState(self._x, self._xdot, self.kinetic_energy, self._time)

    def step(self, wrench: WrenchInput, tau: float) -> PlantState:
        """Advance one interval holding the wrenches constant."""
        _check_tau(tau)
        f = -wrench.f_c + wrench.f_e
        v = self._xdot + tau * (self._lam_inv @ f)
        x = self._x + tau * v
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(x))):
            raise IntegrationFault(f"non-finite plant state at t={self._time!r}")
        self._xdot = v
        self._x = x
        self._time += tau
        return self.state()


class PlanarArm:
    """Two-revolute-joint arm in a vertical plane, uniform rod links.

    The Cartesian port is the end-effector point (x, y).  Actuation maps the
    commanded wrench through J^T and adds exact gravity compensation, so the
    arm presents the same force-driven port as the Cartesian plant, with a
    configuration-dependent operational-space inertia.
    """

    m = 2  # workspace dimension

    def __init__(self, l1=0.5, l2=0.5, m1=4.0, m2=4.0,
                 inertia1: float | None = None, inertia2: float | None = None,
                 q0=(0.0, 0.0), qdot0=(0.0, 0.0), gravity: float = 9.81):
        for label, value in (("l1", l1), ("l2", l2), ("m1", m1), ("m2", m2)):
            if not value > 0:
                raise DomainError(f"{label} must be positive, got {value!r}")
        self.l1, self.l2 = float(l1), float(l2)
        self.m1, self.m2 = float(m1), float(m2)
        # uniform rod about its center unless told otherwise
        self.i1 = float(inertia1) if inertia1 is not None else m1 * l1 * l1 / 12.0
        self.i2 = float(inertia2) if inertia2 is not None else m2 * l2 * l2 / 12.0
        if self.i1 <= 0 or self.i2 <= 0:
            raise DomainError("link inertias must be positive")
        self.gravity = float(gravity)
        self._q = np.array(q0, dtype=float)
        self._qdot = np.array(qdot0, dtype=float)
        if self._q.shape != (2,) or self._qdot.shape != (2,):
            raise DomainError("q0/qdot0 must have two entries")
        self._time = 0.0

    # -- model quantities ----------------------------------------------------

    def mass_matrix(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        lc1, lc2 = 0.5 * self.l1, 0.5 * self.l2
        c2 = np.cos(q[1])
        a = self.m2 * (self.l1 * self.l1 + lc2 * lc2 + 2.0 * self.l1 * lc2 * c2)
        m11 = self.m1 * lc1 * lc1 + self.i1 + a + self.i2
        m12 = self.m2 * (lc2 * lc2 + self.l1 * lc2 * c2) + self.i2
        m22 = self.m2 * lc2 * lc2 + self.i2
        return np.array([[m11, m12], [m12, m22]])

    def coriolis_matrix(self, q, qdot) -> np.ndarray:
        """Christoffel-consistent C(q, qd), so dM/dt - 2C is skew-symmetric."""
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        h = -self.m2 * self.l1 * 0.5 * self.l2 * np.sin(q[1])
        return np.array([
            [h * qdot[1], h * (qdot[0] + qdot[1])],
            [-h * qdot[0], 0.0],
        ])

    def mass_matrix_rate(self, q, qdot) -> np.ndarray:
        """Analytic dM/dt; only the elbow angle enters M."""
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        h = -self.m2 * self.l1 * 0.5 * self.l2 * np.sin(q[1])
        d = h * qdot[1]
        return np.array([[2.0 * d, d], [d, 0.0]])

    def gravity_vector(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        lc1, lc2 = 0.5 * self.l1, 0.5 * self.l2
        g = self.gravity
        c1 = np.cos(q[0])
        c12 = np.cos(q[0] + q[1])
        g1 = (self.m1 * lc1 + self.m2 * self.l1) * g * c1 + self.m2 * lc2 * g * c12
        g2 = self.m2 * lc2 * g * c12
        return np.array([g1, g2])

    def jacobian(self, q) -> np.ndarray:
        """Planar linear Jacobian (2x2): end-effector (xd, yd) = J qd."""
        q = np.asarray(q, dtype=float)
        s1, c1 = np.sin(q[0]), np.cos(q[0])
        s12, c12 = np.sin(q[0] + q[1]), np.cos(q[0] + q[1])
        return np.array([
            [-self.l1 * s1 - self.l2 * s12, -self.l2 * s12],
            [self.l1 * c1 + self.l2 * c12, self.l2 * c12],
        ])

    def linear_jacobian(self, q) -> np.ndarray:
        """3xN translational Jacobian; the out-of-plane row is zero."""
        jv = np.zeros((3, 2))
        jv[:2, :] = self.jacobian(q)
        return jv

    def ee_position(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.array([
            self.l1 * np.cos(q[0]) + self.l2 * np.cos(q[0] + q[1]),
            self.l1 * np.sin(q[0]) + self.l2 * np.sin(q[0] + q[1]),
        ])

    # -- plant port ----------------------------------------------------------

    @property
    def joint_position(self) -> np.ndarray:
        return self._q.copy()

    @property
    def joint_velocity(self) -> np.ndarray:
        return self._qdot.copy()

    @property
    def pose(self) -> np.ndarray:
        return self.ee_position(self._q)

    @property
    def twist(self) -> np.ndarray:
        return self.jacobian(self._q) @ self._qdot

    @property
    def time(self) -> float:
        return self._time

    @property
    def kinetic_energy(self) -> float:
        # joint-space energy is the ground truth; it equals the
        # operational-space energy wherever J is invertible
        return 0.5 * float(self._qdot @ self.mass_matrix(self._q) @ self._qdot)

    def state(self) -> PlantState:
        return PlantState(self.pose, self.twist, self.kinetic_energy, self._time)

    def step(self, wrench: WrenchInput, tau: float) -> PlantState:
        _check_tau(tau)
        q, qdot = self._q, self._qdot
        jt = self.jacobian(q).T
        grav = self.gravity_vector(q)
        # actuation = J^T (-f_c) + exact gravity compensation
        torque = jt @ (-wrench.f_c) + grav
        rhs = torque + jt @ wrench.f_e - self.coriolis_matrix(q, qdot) @ qdot - grav
        qdd = np.linalg.solve(self.mass_matrix(q), rhs)
        qdot_new = qdot + tau * qdd
        q_new = q + tau * qdot_new
        if not (np.all(np.isfinite(qdot_new)) and np.all(np.isfinite(q_new))):
            raise IntegrationFault(f"non-finite arm state at t={self._time!r}")
        self._qdot = qdot_new
        self._q = q_new
        self._time += tau
        return self.state()


def power_balance_residual(prev: PlantState, new: PlantState,
                           wrench: WrenchInput, tau: float) -> float:
    """|dH - tau (-f_c + f_e) . xd_mid| for one step; O(tau^2) per step.

    The trapezoidal velocity makes the work of a constant wrench over a
    semi-implicit Euler step exact for constant inertia, so this residual
    isolates genuine integration error.
    """
    v_mid = 0.5 * (prev.xdot + new.xdot)
    work = tau * float((-wrench.f_c + wrench.f_e) @ v_mid)
    return abs((new.kinetic_energy_truth - prev.kinetic_energy_truth) - work)
