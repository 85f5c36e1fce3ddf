"""ISO/TS 15066 power-and-force-limiting quantities.

Energy limit per body region, the standard's lumped robot mass, the two-body
reduced mass, the velocity limit derived from them, and the
configuration-dependent apparent mass of a manipulator at its end effector.

Everything here is a pure function over immutable value types; stiffnesses
are stored in N/m throughout (unit conversion happens at config load).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "BodyRegion",
    "RobotMassSpec",
    "BUILTIN_REGIONS",
    "max_energy",
    "robot_effective_mass",
    "reduced_mass",
    "v_max",
    "apparent_mass",
    "endpoint_mobility",
]

# Relative tolerance for the positive-semidefiniteness check on mobility
# tensors: eigenvalues above -SPD_REL_TOL * lambda_max are treated as zero.
SPD_REL_TOL = 1e-9
UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class BodyRegion:
    """Biomechanical contact parameters for one human body area.

    A region either carries the two-body contact-model data (quasi-static
    force limit f_max in N, effective spring constant k in N/m, optionally
    the effective body mass m_h in kg), or quotes an energy limit directly
    via ``e_max_override`` in J.  The transient multiplier scales f_max for
    short impacts; it enters the energy limit, which is what makes the limit
    usable as a kinetic-energy budget for brief contact.
    """

    name: str
    f_max: float | None = None
    k: float | None = None
    m_h: float | None = None
    transient_multiplier: float = 2.0
    e_max_override: float | None = None

    def __post_init__(self):
        if self.e_max_override is None and (self.f_max is None or self.k is None):
            raise DomainError(
                f"region {self.name!r}: give f_max and k, or an e_max_override")
        for label in ("f_max", "k", "m_h", "e_max_override"):
            value = getattr(self, label)
            if value is not None and not value > 0:
                raise DomainError(
                    f"region {self.name!r}: {label} must be positive, got {value!r}")
        if not self.transient_multiplier >= 1.0:
            raise DomainError(
                f"region {self.name!r}: transient_multiplier must be >= 1")


@dataclass(frozen=True)
class RobotMassSpec:
    """Lumped robot data for the standard's effective-mass formula."""

    moving_mass: float     # total mass of the moving parts, kg
    payload: float = 0.0   # end-effector load, kg

    def __post_init__(self):
        if not self.moving_mass > 0:
            raise DomainError(f"moving_mass must be positive, got {self.moving_mass!r}")
        if self.payload < 0:
            raise DomainError(f"payload must be >= 0, got {self.payload!r}")


#: Regions used by the bundled scenarios.  Chest carries the full contact
#: model; the shoulder entry quotes its energy budget directly.
BUILTIN_REGIONS = {
    "chest": BodyRegion(name="chest", f_max=140.0, k=25_000.0, m_h=40.0),
    "shoulders": BodyRegion(name="shoulders", e_max_override=2.5),
}


def max_energy(region: BodyRegion) -> float:
    """Transfer-energy limit of a body region in J.

    For regions with contact-model data this is f**2 / (2 k) with
    f = transient_multiplier * f_max, i.e. the elastic energy the contact
    spring can absorb before the transient force limit is exceeded.  Regions
    with an explicit override return it unchanged.
    """
    if region.e_max_override is not None:
        return float(region.e_max_override)
    f = region.transient_multiplier * region.f_max
    return float(f * f / (2.0 * region.k))


def robot_effective_mass(spec: RobotMassSpec) -> float:
    """Lumped robot mass at the contact point: half the moving mass plus payload."""
    return 0.5 * spec.moving_mass + spec.payload


def reduced_mass(m_h: float, m_r: float) -> float:
    """Two-body reduced mass (1/m_h + 1/m_r)^-1 in kg."""
    if not (m_h > 0 and m_r > 0):
        raise DomainError(f"masses must be positive, got m_h={m_h!r}, m_r={m_r!r}")
    return 1.0 / (1.0 / m_h + 1.0 / m_r)


def v_max(region: BodyRegion, m_r: float, force_mode: str) -> float:
    """Relative-speed limit f / sqrt(mu k) in m/s for the given robot mass.

    force_mode selects which force enters the numerator: "quasi_static" uses
    f_max as published, "transient" uses transient_multiplier * f_max.  The
    choice is left to the caller because published worked examples are not
    consistent about it; the CLI prints both.
    """
    if region.f_max is None or region.k is None:
        raise DomainError(f"region {region.name!r} has no contact-model data")
    if region.m_h is None:
        raise DomainError(f"region {region.name!r} has no body mass m_h")
    if force_mode == "quasi_static":
        f = region.f_max
    elif force_mode == "transient":
        f = region.transient_multiplier * region.f_max
    else:
        raise DomainError(f"force_mode must be quasi_static or transient, got {force_mode!r}")
    mu = reduced_mass(region.m_h, m_r)
    return float(f / np.sqrt(mu * region.k))


def apparent_mass(n, mobility) -> float:
    """Apparent mass (n^T Lambda^-1 n)^-1 along unit direction n, in kg.

    ``mobility`` is the end-point mobility tensor Lambda^-1.  It must be
    symmetric positive-semidefinite within tolerance; directions with no
    mobility (e.g. out-of-plane for a planar arm) have unbounded apparent
    mass and raise DomainError.
    """
    n = np.asarray(n, dtype=float)
    a = np.asarray(mobility, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"mobility must be square, got shape {a.shape}")
    if n.shape != (a.shape[0],):
        raise DomainError(f"direction shape {n.shape} does not match mobility {a.shape}")
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise DomainError(f"direction must be unit length, |n| = {norm!r}")

    scale = float(np.max(np.abs(a))) or 1.0
    if float(np.max(np.abs(a - a.T))) > 1e-9 * scale:
        raise DomainError("mobility tensor is not symmetric")
    sym = 0.5 * (a + a.T)
    evals, evecs = np.linalg.eigh(sym)
    lam_max = float(evals[-1])
    if lam_max <= 0:
        raise DomainError("mobility tensor has no positive eigenvalue")
    if float(evals[0]) < -SPD_REL_TOL * lam_max:
        raise DomainError(
            f"mobility tensor is not positive semidefinite (eigenvalues {evals})")
    clamped = evecs @ np.diag(np.clip(evals, 0.0, None)) @ evecs.T

    quad = float(n @ clamped @ n)
    if quad <= 1e-12 * lam_max:
        raise DomainError("no mobility along the requested direction")
    return 1.0 / quad


def endpoint_mobility(model, q) -> np.ndarray:
    """End-point mobility tensor J_v M(q)^-1 J_v^T.

    ``model`` must expose mass_matrix(q) and linear_jacobian(q); the linear
    Jacobian has one row per workspace translation axis, so a planar arm
    yields a 3x3 tensor whose out-of-plane row and column are zero.
    """
    q = np.asarray(q, dtype=float)
    jv = np.atleast_2d(np.asarray(model.linear_jacobian(q), dtype=float))
    m = np.atleast_2d(np.asarray(model.mass_matrix(q), dtype=float))
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise DomainError("mass matrix is not positive definite") from None
    return jv @ np.linalg.solve(m, jv.T)
