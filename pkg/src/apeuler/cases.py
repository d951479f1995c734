"""Benchmark definitions: initial data, boundary conditions, reference solutions.

All cases are expressed in the non-dimensional variables of the solver; the
constructors perform any scaling from stated physical reference values (the
water-like stiffened-gas and cubic vortex variants) so the solver only ever
sees non-dimensional fields plus the Mach number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import eos as eos_mod
from .operators import BoundarySpec

GAMMA_AIR = 1.4


class CaseError(ValueError):
    pass


@dataclass
class CaseSpec:
    """Everything a run needs to set itself up."""

    name: str
    dim: int
    extents: tuple
    periodic: tuple
    default_n_elems: tuple
    default_degree: int
    M: float
    eos: object
    t_final: float
    initial_rho: object
    initial_u: object
    initial_p: object
    bcs: dict = field(default_factory=dict)
    default_dt: float | None = None
    reference: dict = field(default_factory=dict)

    def validate_initial_state(self, pts):
        """Check EOS admissibility of the initial data at given points."""
        rho = np.asarray(self.initial_rho(pts), float)
        p = np.asarray(self.initial_p(pts), float)
        eos_mod.check_state(self.eos, rho, p)
        return True


# ---------------------------------------------------------------------------
# isentropic vortex
# ---------------------------------------------------------------------------

def isentropic_vortex(M=1e-3, beta=5.0, center=(0.0, 0.0), gamma=GAMMA_AIR) -> CaseSpec:
    """Steady vortex on (-10, 10)^2 whose exact solution is the initial state.

    Velocity scales with M and the pressure with M^2, so the acoustic-to-
    advective stiffness ratio is 1/M while the non-dimensional sound speed
    stays O(M).
    """
    if M <= 0.0:
        raise CaseError("M must be positive")
    x0, y0 = center

    def r2(pts):
        return (pts[:, 0] - x0)**2 + (pts[:, 1] - y0)**2

    def delta_T(pts):
        return -M**2 * (gamma - 1.0) / gamma * beta**2 / (8.0 * math.pi**2) * np.exp(1.0 - r2(pts))

    def rho(pts):
        return (1.0 + delta_T(pts))**(1.0 / (gamma - 1.0))

    def u(pts):
        amp = M * beta / (2.0 * math.pi) * np.exp(0.5 * (1.0 - r2(pts)))
        return np.stack([-amp * (pts[:, 1] - y0), amp * (pts[:, 0] - x0)], axis=1)

    def p(pts):
        return M**2 * (1.0 + delta_T(pts))**(gamma / (gamma - 1.0))

    return CaseSpec(
        name="vortex", dim=2, extents=((-10.0, 10.0), (-10.0, 10.0)),
        periodic=(True, True), default_n_elems=(30, 30), default_degree=2,
        M=M, eos=eos_mod.IdealGas(gamma), t_final=10.0,
        initial_rho=rho, initial_u=u, initial_p=p,
        reference={"rho": rho, "u": u, "p": p},
    )


# ---------------------------------------------------------------------------
# colliding acoustic pulses
# ---------------------------------------------------------------------------

def colliding_pulses(M=1.0 / 11.0, eosp=None) -> CaseSpec:
    """Two acoustic pulses colliding on (-L, L), L = 2/M.

    The perturbation amplitudes are kept at their ideal-gas (gamma = 1.4)
    values also for the stiffened-gas variants.
    """
    if M <= 0.0:
        raise CaseError("M must be positive")
    eosp = eosp or eos_mod.IdealGas(GAMMA_AIR)
    L = 2.0 / M
    rho_bar, rho_prime = 0.955, 2.0
    u_bar = 2.0 * math.sqrt(GAMMA_AIR)
    p_bar, p_prime = 1.0, 2.0 * GAMMA_AIR

    def bump(x):
        return 1.0 - np.cos(2.0 * math.pi * x / L)

    def rho(pts):
        return rho_bar + 0.5 * M * rho_prime * bump(pts[:, 0])

    def u(pts):
        return (-0.5 * np.sign(pts[:, 0]) * u_bar * bump(pts[:, 0]))[:, None]

    def p(pts):
        return p_bar + 0.5 * M * p_prime * bump(pts[:, 0])

    return CaseSpec(
        name="pulses", dim=1, extents=((-L, L),), periodic=(True,),
        default_n_elems=(55,), default_degree=2, M=M, eos=eosp, t_final=1.63,
        initial_rho=rho, initial_u=u, initial_p=p, default_dt=1.63e-2,
    )


# ---------------------------------------------------------------------------
# density layering
# ---------------------------------------------------------------------------

def layering_window(x, L=50.0):
    """Compact window: (1 - cos(5 pi x / L))/2 on [0, 2L/5], zero otherwise."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x >= 0.0) & (x <= 0.4 * L)
    out[inside] = 0.5 * (1.0 - np.cos(5.0 * math.pi * x[inside] / L))
    return out


def density_layering(M=0.02) -> CaseSpec:
    """Large-amplitude short-wavelength density layer carried by a long acoustic wave."""
    if M <= 0.0:
        raise CaseError("M must be positive")
    L = 50.0
    rho_bar, rho_tilde, rho1 = 1.0, 0.5, 2.0
    u_tilde = 2.0 * math.sqrt(GAMMA_AIR)
    p_bar, p1 = 1.0, 2.0 * GAMMA_AIR

    def long_wave(x):
        return 1.0 + np.cos(math.pi * x / L)

    def rho(pts):
        x = pts[:, 0]
        return (rho_bar + layering_window(x, L) * rho_tilde * np.sin(40.0 * math.pi * x / L)
                + 0.5 * M * rho1 * long_wave(x))

    def u(pts):
        return (0.5 * u_tilde * long_wave(pts[:, 0]))[:, None]

    def p(pts):
        return p_bar + 0.5 * M * p1 * long_wave(pts[:, 0])

    def limit_density(pts, u_mean):
        x = pts[:, 0] - u_mean * 5.071
        # wrap periodically into (-L, L)
        x = (x + L) % (2.0 * L) - L
        return rho_bar + layering_window(x, L) * rho_tilde * np.sin(40.0 * math.pi * x / L)

    return CaseSpec(
        name="layering", dim=1, extents=((-L, L),), periodic=(True,),
        default_n_elems=(250,), default_degree=2, M=M,
        eos=eos_mod.IdealGas(GAMMA_AIR), t_final=5.071,
        initial_rho=rho, initial_u=u, initial_p=p, default_dt=1.6903e-2,
        reference={"limit_density": limit_density},
    )


def layering_limit_mean_velocity() -> float:
    """Steady mean velocity of the incompressible limit of the layering case."""
    rho_bar, rho_tilde = 1.0, 0.5
    u_tilde = 2.0 * math.sqrt(GAMMA_AIR)
    corr = (164375.0 - 32875.0 * math.sqrt(5.0)) / (1320441408.0 * math.pi)
    return u_tilde / 2.0 - corr * (rho_tilde * u_tilde / rho_bar)


# ---------------------------------------------------------------------------
# open tube with time-dependent boundary pressure
# ---------------------------------------------------------------------------

def _tube_eos(kind):
    if kind == "ideal":
        return eos_mod.IdealGas(GAMMA_AIR)
    if kind == "stiffened":
        return eos_mod.StiffenedGas(gamma=4.4, pi_inf=6.8e3, q_inf=0.0)
    if kind == "cubic":
        return eos_mod.peng_robinson(gamma=1.4, a=1.0, b=0.15)
    raise CaseError(f"unsupported open-tube EOS {kind!r}")


def open_tube(eos_kind="ideal", M=1e-4) -> CaseSpec:
    """Uniform initial state driven by time-dependent boundary data on (0, 10).

    Left boundary imposes rho and u, right boundary imposes the pressure
    with large amplitude variation.
    """
    eosp = _tube_eos(eos_kind)
    L = 10.0

    def rho0(pts):
        return np.ones(len(pts))

    def u0(pts):
        return np.ones((len(pts), 1))

    def p0(pts):
        return np.ones(len(pts))

    bcs = {
        (0, "lo"): BoundarySpec(rho=lambda t: 1.0 + 0.3 * math.sin(4.0 * t),
                                u=lambda t: np.array([1.0 + 0.5 * math.sin(2.0 * t)]),
                                p=None),
        (0, "hi"): BoundarySpec(rho=None, u=None,
                                p=lambda t: 1.0 + 0.25 * math.sin(3.0 * t)),
    }
    case = CaseSpec(
        name="tube", dim=1, extents=((0.0, L),), periodic=(False,),
        default_n_elems=(50,), default_degree=2, M=M, eos=eosp, t_final=7.47,
        initial_rho=rho0, initial_u=u0, initial_p=p0, bcs=bcs,
        default_dt=9.3375e-4,
    )
    case.reference["limit"] = lambda t, n_paths=201, n_steps=10000: open_tube_limit(
        eosp, t, n_paths=n_paths, n_steps=n_steps)
    return case


def _tube_pbar(t):
    return 1.0 + 0.25 * np.sin(3.0 * np.asarray(t, dtype=float))


def _tube_dpbar_dt(t):
    return 0.75 * np.cos(3.0 * np.asarray(t, dtype=float))


def _tube_u_left(t):
    return 1.0 + 0.5 * np.sin(2.0 * np.asarray(t, dtype=float))


def _tube_rho_left(t):
    return 1.0 + 0.3 * np.sin(4.0 * np.asarray(t, dtype=float))


def open_tube_limit_velocity(eosp, t, x):
    """Leading-order velocity of the tube limit: linear in x for ideal/SG.

    div u = -(1/(gamma (p + pi_inf))) dp/dt with the spatially constant
    leading-order pressure taken from the outflow boundary data.
    """
    if isinstance(eosp, eos_mod.IdealGas):
        gamma, pi_inf = eosp.gamma, 0.0
    elif isinstance(eosp, eos_mod.StiffenedGas):
        gamma, pi_inf = eosp.gamma, eosp.pi_inf
    else:
        raise CaseError("closed-form limit velocity exists for ideal/SG only")
    slope = -_tube_dpbar_dt(t) / (gamma * (_tube_pbar(t) + pi_inf))
    return _tube_u_left(t) + slope * np.asarray(x, dtype=float)


def open_tube_limit(eosp, t_end, n_paths=201, n_steps=10000):
    """Leading-order (rho, u) profiles at t_end by backward particle tracing.

    Density follows D log(rho)/Dt = -div(u) along particle paths of the
    limit velocity; particles entering through x = 0 start from the inflow
    boundary density at their entry time.  Works for any supported EOS via
    1/(rho c^2); for ideal/SG the velocity is the closed-form linear
    profile.
    """
    L = 10.0

    if isinstance(eosp, (eos_mod.IdealGas, eos_mod.StiffenedGas)):
        def u_of(x, t):
            return open_tube_limit_velocity(eosp, t, x)

        def dlogrho_dt(rho, t):
            if isinstance(eosp, eos_mod.IdealGas):
                denom = eosp.gamma * _tube_pbar(t)
            else:
                denom = eosp.gamma * (_tube_pbar(t) + eosp.pi_inf)
            return _tube_dpbar_dt(t) / denom
    else:
        raise CaseError("open_tube_limit supports the ideal/SG variants")

    xs = np.linspace(0.0, L, n_paths)
    dt = t_end / n_steps

    # trace each target point backwards; record entry time if it leaves at x=0
    x_path = xs.copy()
    t_entry = np.zeros(n_paths)
    entered = np.zeros(n_paths, dtype=bool)
    t = t_end
    for _ in range(n_steps):
        # classical RK4 for dx/dt = u(x, t), integrated backwards
        h = -dt
        k1 = u_of(x_path, t)
        k2 = u_of(x_path + 0.5 * h * k1, t + 0.5 * h)
        k3 = u_of(x_path + 0.5 * h * k2, t + 0.5 * h)
        k4 = u_of(x_path + h * k3, t + h)
        x_new = x_path + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        crossing = (~entered) & (x_new <= 0.0)
        if np.any(crossing):
            frac = x_path[crossing] / np.maximum(x_path[crossing] - x_new[crossing], 1e-300)
            t_entry[crossing] = t - frac * dt
            entered[crossing] = True
        x_new[entered] = 0.0
        x_path = x_new
        t += h

    # integrate the density compression forward along each path
    rho_end = np.empty(n_paths)
    start_t = np.where(entered, t_entry, 0.0)
    start_rho = np.where(entered, _tube_rho_left(t_entry), 1.0)
    # the compression law integrates in closed form for ideal and SG
    if isinstance(eosp, eos_mod.IdealGas):
        ratio = (_tube_pbar(t_end) / _tube_pbar(start_t))**(1.0 / eosp.gamma)
    else:
        ratio = ((_tube_pbar(t_end) + eosp.pi_inf)
                 / (_tube_pbar(start_t) + eosp.pi_inf))**(1.0 / eosp.gamma)
    rho_end = start_rho * ratio
    u_end = u_of(xs, t_end)
    return xs, rho_end, u_end


# ---------------------------------------------------------------------------
# Gresho vortex
# ---------------------------------------------------------------------------

def _gresho_pressure_shape(r):
    """Pressure deviation from the background, in units of rho u_max^2."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    inner = r < 0.2
    mid = (r >= 0.2) & (r < 0.4)
    outer = r >= 0.4
    out[inner] = 12.5 * r[inner]**2
    out[mid] = (12.5 * r[mid]**2
                + 4.0 * (1.0 - 5.0 * r[mid] - math.log(0.2) + np.log(r[mid])))
    out[outer] = 4.0 * math.log(2.0) - 2.0
    return out


def _gresho_uphi(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < 0.2, 5.0 * r, np.where(r < 0.4, 2.0 - 5.0 * r, 0.0))


def gresho(M=1e-3, eos_kind="ideal") -> CaseSpec:
    """Rotating equilibrium vortex on (0, 1)^2, three rotations by t = 3.

    The background pressure is set so that the peak local Mach number is M:
    p0 = rho0/gamma (ideal, non-dimensional), shifted by -pi_inf for the
    stiffened gas, and via the sound-speed closure f(rho0) for the cubic
    law.  The non-dimensional sound speed at the background state is 1.
    """
    if M <= 0.0:
        raise CaseError("M must be positive")
    rho0 = 1.0  # after scaling by the reference density

    if eos_kind == "ideal":
        eosp = eos_mod.IdealGas(GAMMA_AIR)
        p0 = rho0 / eosp.gamma
    elif eos_kind == "stiffened":
        # physical: gamma 4.4, pi_inf = 6.8e8 Pa, rho0 = 1000 kg/m^3, u = 1 m/s,
        # references R = rho0, U = u_max; pressure scale R U^2 / M^2
        gamma = 4.4
        pi_inf_nd = 6.8e8 * M**2 / 1000.0
        eosp = eos_mod.StiffenedGas(gamma=gamma, pi_inf=pi_inf_nd, q_inf=0.0)
        p0 = rho0 / gamma - pi_inf_nd
    elif eos_kind == "cubic":
        # physical: a = 500 m^5/(kg s^2), b = 1e-3 m^3/kg, rho0 = 1 kg/m^3
        gamma = 1.4
        a_nd = 500.0 * M**2
        b_nd = 1e-3
        eosp = eos_mod.peng_robinson(gamma=gamma, a=a_nd, b=b_nd)
        f0 = _cubic_sound_closure(eosp, rho0)
        p0 = (1.0 + f0) * rho0 * (1.0 - rho0 * b_nd) / gamma
    else:
        raise CaseError(f"unsupported Gresho EOS {eos_kind!r}")

    def radius(pts):
        return np.sqrt((pts[:, 0] - 0.5)**2 + (pts[:, 1] - 0.5)**2)

    def rho(pts):
        return np.full(len(pts), rho0)

    def u(pts):
        r = radius(pts)
        uphi = _gresho_uphi(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos_phi = np.where(r > 0.0, (pts[:, 0] - 0.5) / r, 0.0)
            sin_phi = np.where(r > 0.0, (pts[:, 1] - 0.5) / r, 0.0)
        return np.stack([-uphi * sin_phi, uphi * cos_phi], axis=1)

    def p(pts):
        return p0 + M**2 * rho0 * _gresho_pressure_shape(radius(pts))

    return CaseSpec(
        name="gresho", dim=2, extents=((0.0, 1.0), (0.0, 1.0)),
        periodic=(True, True), default_n_elems=(40, 40), default_degree=2,
        M=M, eos=eosp, t_final=3.0,
        initial_rho=rho, initial_u=u, initial_p=p, default_dt=2e-3,
    )


def _cubic_sound_closure(eosp: eos_mod.GeneralCubic, rho):
    """f(rho) with c^2 = gamma p / (rho (1 - rho b)) - f(rho) for the cubic law."""
    a, b, r1, r2, gamma = eosp.a, eosp.b, eosp.r1, eosp.r2, eosp.gamma
    d1 = 1.0 - rho * b * r1
    d2 = 1.0 - rho * b * r2
    db = 1.0 - rho * b
    du_over_b = -1.0 / (d1 * d2)
    return (a * rho / db * (du_over_b * (gamma - 1.0) + (1.0 - 2.0 * rho * b) / (d1 * d2))
            + a * b * rho**2 * (r1 * d2 + r2 * d1) / (d1**2 * d2**2))


# ---------------------------------------------------------------------------
# baroclinic vorticity generation
# ---------------------------------------------------------------------------

def baroclinic_profile(y, L, rho2=0.8, eps=1e-2):
    """Vertical density profile, regularized to be continuous at y = L/5."""
    y = np.asarray(y, dtype=float)
    y_lo = 0.2 * L - eps
    y_hi = 0.2 * L + eps
    lo_val = rho2 * y_lo / (0.4 * L)
    hi_val = rho2 * (y_hi / (0.4 * L) - 0.5) - 0.4
    out = np.where(y <= y_lo, rho2 * y / (0.4 * L),
                   np.where(y >= y_hi, rho2 * (y / (0.4 * L) - 0.5) - 0.4,
                            lo_val + (hi_val - lo_val) * (y - y_lo) / (2.0 * eps)))
    return out


def baroclinic(M=5e-2) -> CaseSpec:
    """Right-going acoustic wave crossing a vertical density layering."""
    if M <= 0.0:
        raise CaseError("M must be positive")
    L = 1.0 / M
    gamma = GAMMA_AIR
    rho_bar, rho_prime = 1.0, 0.2
    p_bar, p_prime = 1.0, gamma
    u_bar = math.sqrt(gamma)

    def wave(x):
        return 1.0 + np.cos(math.pi * x / L)

    def rho(pts):
        return rho_bar + M * rho_prime * wave(pts[:, 0]) + baroclinic_profile(pts[:, 1], L)

    def u(pts):
        ux = u_bar * wave(pts[:, 0])
        return np.stack([ux, np.zeros_like(ux)], axis=1)

    def p(pts):
        return p_bar + M * p_prime * wave(pts[:, 0])

    return CaseSpec(
        name="baroclinic", dim=2, extents=((-L, L), (0.0, 0.4 * L)),
        periodic=(True, True), default_n_elems=(200, 40), default_degree=2,
        M=M, eos=eos_mod.IdealGas(gamma), t_final=16.0,
        initial_rho=rho, initial_u=u, initial_p=p, default_dt=4e-3,
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_CASES = {
    "vortex": isentropic_vortex,
    "pulses": colliding_pulses,
    "layering": density_layering,
    "tube": open_tube,
    "gresho": gresho,
    "baroclinic": baroclinic,
}


def case_names():
    return sorted(_CASES)


def get_case(name, **kwargs) -> CaseSpec:
    try:
        factory = _CASES[name]
    except KeyError:
        raise CaseError(f"unknown case {name!r}; available: {sorted(_CASES)}") from None
    return factory(**kwargs)
