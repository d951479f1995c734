"""Equations of state closing the non-dimensional Euler system.

Three families are supported:

* ideal gas:          p = (gamma - 1) rho e
* stiffened gas:      p = (gamma - 1)(rho e - rho q_inf) - gamma pi_inf
* general cubic:      e = (1 - rho b)/(gamma - 1) (p/rho + a rho / D) + (a/b) U,
                      D = (1 - rho b r1)(1 - rho b r2)

with the Peng-Robinson constants r1 = -1 - sqrt(2), r2 = -1 + sqrt(2) as a
preset.  All three laws are affine in the pressure at fixed density, which is
what the semi-implicit energy solve exploits: rho e = alpha(rho) p + beta(rho).

Every function accepts scalars or numpy arrays for (rho, p) and is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Margin used when rejecting states too close to a domain boundary, e.g.
# rho*b*r -> 1 for the cubic law where the log terms blow up.
DOMAIN_MARGIN = 1e-10

PENG_ROBINSON_R1 = -1.0 - math.sqrt(2.0)
PENG_ROBINSON_R2 = -1.0 + math.sqrt(2.0)


class EosError(ValueError):
    """Base class for thermodynamic errors."""


class EosDomainError(EosError):
    """State outside the admissible domain of the EOS (e.g. rho*b*r >= 1)."""


class NonHyperbolicStateError(EosError):
    """Squared sound speed is not positive."""


class SingularEosError(EosError):
    """The affine pressure coefficient alpha(rho) vanishes."""


class UnsupportedOperationError(EosError):
    """Operation not defined for this EOS variant (e.g. T without R)."""


@dataclass(frozen=True)
class IdealGas:
    """Ideal gas law with constant specific-heat ratio."""

    gamma: float = 1.4
    R_gas: float | None = None  # only needed for temperature()

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise EosError(f"gamma must exceed 1, got {self.gamma}")


@dataclass(frozen=True)
class StiffenedGas:
    """Stiffened gas law, suitable for liquids such as water."""

    gamma: float
    pi_inf: float = 0.0
    q_inf: float = 0.0

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise EosError(f"gamma must exceed 1, got {self.gamma}")


@dataclass(frozen=True)
class GeneralCubic:
    """General cubic law with attraction a, co-volume b and constants r1, r2.

    Constant a and constant de/dT for the underlying ideal part are assumed;
    gamma is the specific-heat ratio of that ideal part.  R_gas is only used
    by temperature().
    """

    gamma: float
    a: float
    b: float
    r1: float = PENG_ROBINSON_R1
    r2: float = PENG_ROBINSON_R2
    R_gas: float | None = None

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise EosError(f"gamma must exceed 1, got {self.gamma}")
        if self.a < 0.0 or self.b < 0.0:
            raise EosError("cubic EOS requires a >= 0 and b >= 0")


EosParams = IdealGas | StiffenedGas | GeneralCubic


def peng_robinson(gamma: float, a: float, b: float, R_gas: float | None = None) -> GeneralCubic:
    """Peng-Robinson preset of the general cubic law."""
    return GeneralCubic(gamma=gamma, a=a, b=b,
                        r1=PENG_ROBINSON_R1, r2=PENG_ROBINSON_R2, R_gas=R_gas)


def _cubic_denominators(eos: GeneralCubic, rho):
    """Return (1 - rho b r1, 1 - rho b r2, 1 - rho b), raising on domain exit."""
    rho = np.asarray(rho, dtype=float)
    d1 = 1.0 - rho * eos.b * eos.r1
    d2 = 1.0 - rho * eos.b * eos.r2
    db = 1.0 - rho * eos.b
    if np.min(d1) <= DOMAIN_MARGIN or np.min(d2) <= DOMAIN_MARGIN or np.min(db) <= DOMAIN_MARGIN:
        raise EosDomainError("cubic EOS: rho*b too large, log/denominator domain violated")
    return d1, d2, db


def check_state(eos: EosParams, rho, p) -> None:
    """Validate admissibility of (rho, p); raises on violation."""
    rho = np.asarray(rho, dtype=float)
    if np.min(rho) <= 0.0:
        raise EosDomainError("density must be positive")
    if isinstance(eos, GeneralCubic):
        _cubic_denominators(eos, rho)
    c2 = sound_speed_sq(eos, rho, p)
    if np.min(c2) <= 0.0:
        raise NonHyperbolicStateError("squared sound speed is not positive")


def u_function(rho, b, r1, r2):
    """The U(rho, b, r1, r2) factor of the cubic internal energy.

    U = log((1 - rho b r1)/(1 - rho b r2)) / (r1 - r2); the degenerate case
    r1 = r2 uses the analytic limit -rho b / (1 - rho b r1), which tends to
    the van der Waals value -rho b as r1, r2 -> 0.
    """
    rho = np.asarray(rho, dtype=float)
    d1 = 1.0 - rho * b * r1
    d2 = 1.0 - rho * b * r2
    if np.min(d1) <= DOMAIN_MARGIN or np.min(d2) <= DOMAIN_MARGIN:
        raise EosDomainError("u_function: non-positive log argument")
    if abs(r1 - r2) > 1e-12:
        return np.log(d1 / d2) / (r1 - r2)
    return -rho * b / d1


def _u_over_b(rho, b, r1, r2):
    """U / b, stable in the b -> 0 limit (U vanishes linearly in b)."""
    rho = np.asarray(rho, dtype=float)
    x = rho * b * max(abs(r1), abs(r2), 1.0)
    if np.max(np.abs(x)) < 1e-8:
        # series of log((1-x1)/(1-x2))/(r1-r2)/b around b = 0
        rb = rho * b
        return -rho * (1.0 + rb * (r1 + r2) / 2.0 + rb**2 * (r1**2 + r1 * r2 + r2**2) / 3.0)
    return u_function(rho, b, r1, r2) / b


def internal_energy(eos: EosParams, rho, p):
    """Specific internal energy e(rho, p)."""
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.min(rho) <= 0.0:
        raise EosDomainError("density must be positive")
    if isinstance(eos, IdealGas):
        return p / ((eos.gamma - 1.0) * rho)
    if isinstance(eos, StiffenedGas):
        return (p + eos.gamma * eos.pi_inf) / ((eos.gamma - 1.0) * rho) + eos.q_inf
    d1, d2, db = _cubic_denominators(eos, rho)
    ideal_part = db / (eos.gamma - 1.0) * (p / rho + eos.a * rho / (d1 * d2))
    return ideal_part + eos.a * _u_over_b(rho, eos.b, eos.r1, eos.r2)


def enthalpy(eos: EosParams, rho, p):
    """Specific enthalpy h = e + p/rho."""
    return internal_energy(eos, rho, p) + np.asarray(p, dtype=float) / np.asarray(rho, dtype=float)


def rho_e_affine(eos: EosParams, rho):
    """Coefficients (alpha, beta) with rho*e(rho, p) = alpha(rho)*p + beta(rho).

    All supported laws are affine in p at fixed rho; beta is evaluated as
    rho*e(rho, 0) so it is consistent with internal_energy by construction.
    """
    rho = np.asarray(rho, dtype=float)
    if np.min(rho) <= 0.0:
        raise EosDomainError("density must be positive")
    if isinstance(eos, IdealGas):
        alpha = np.full_like(rho, 1.0 / (eos.gamma - 1.0))
        beta = np.zeros_like(rho)
        return alpha, beta
    if isinstance(eos, StiffenedGas):
        alpha = np.full_like(rho, 1.0 / (eos.gamma - 1.0))
        beta = np.full_like(rho, eos.gamma * eos.pi_inf / (eos.gamma - 1.0)) + rho * eos.q_inf
        return alpha, beta
    _, _, db = _cubic_denominators(eos, rho)
    alpha = db / (eos.gamma - 1.0)
    beta = rho * internal_energy(eos, rho, np.zeros_like(rho))
    return alpha, beta


def pressure_from_rho_e(eos: EosParams, rho, rho_e):
    """Invert the EOS for pressure given the volumetric internal energy."""
    alpha, beta = rho_e_affine(eos, rho)
    if np.min(np.abs(alpha)) < 1e-300:
        raise SingularEosError("alpha(rho) = 0, cannot invert for pressure")
    return (np.asarray(rho_e, dtype=float) - beta) / alpha


def sound_speed_sq(eos: EosParams, rho, p):
    """Squared speed of sound c^2 = dp/drho at constant entropy."""
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.min(rho) <= 0.0:
        raise EosDomainError("density must be positive")
    if isinstance(eos, IdealGas):
        c2 = eos.gamma * p / rho
    elif isinstance(eos, StiffenedGas):
        c2 = eos.gamma * (p + eos.pi_inf) / rho
    else:
        d1, d2, db = _cubic_denominators(eos, rho)
        gamma, a, b, r1, r2 = eos.gamma, eos.a, eos.b, eos.r1, eos.r2
        # dU/drho / b = -1/(d1 d2), finite also for b = 0
        du_over_b = -1.0 / (d1 * d2)
        c2 = (gamma * p / (rho * db)
              - a * rho / db * (du_over_b * (gamma - 1.0) + (1.0 - 2.0 * rho * b) / (d1 * d2))
              - a * b * rho**2 * (r1 * d2 + r2 * d1) / (d1**2 * d2**2))
    if np.min(c2) <= 0.0:
        raise NonHyperbolicStateError("squared sound speed is not positive")
    return c2


def temperature(eos: EosParams, rho, p):
    """Temperature from (rho, p); needs a specific gas constant."""
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    if isinstance(eos, IdealGas):
        if eos.R_gas is None:
            raise UnsupportedOperationError("IdealGas.R_gas not set")
        return p / (rho * eos.R_gas)
    if isinstance(eos, GeneralCubic):
        if eos.R_gas is None:
            raise UnsupportedOperationError("GeneralCubic.R_gas not set")
        d1, d2, db = _cubic_denominators(eos, rho)
        return db / eos.R_gas * (p / rho + eos.a * rho / (d1 * d2))
    raise UnsupportedOperationError("temperature is not defined for the stiffened gas law")


def pressure_from_rho_T(eos: GeneralCubic, rho, T):
    """Cubic pressure law p(rho, T); inverse of temperature()."""
    if not isinstance(eos, GeneralCubic):
        raise UnsupportedOperationError("pressure_from_rho_T requires the cubic law")
    if eos.R_gas is None:
        raise UnsupportedOperationError("GeneralCubic.R_gas not set")
    rho = np.asarray(rho, dtype=float)
    d1, d2, db = _cubic_denominators(eos, rho)
    return rho * eos.R_gas * np.asarray(T, dtype=float) / db - eos.a * rho**2 / (d1 * d2)


def density_enthalpy_slope(eos: EosParams, rho, p):
    """dh/drho at constant p, used by the low-Mach limit diagnostics."""
    # h = e + p/rho and e is affine in p, so differentiate the closed forms.
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    c2 = sound_speed_sq(eos, rho, p)
    alpha, _ = rho_e_affine(eos, rho)
    # c^2 = -(dh/drho) / (de/dp) with de/dp = alpha/rho
    return -c2 * alpha / rho
