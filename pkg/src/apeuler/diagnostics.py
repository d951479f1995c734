"""Quantitative post-processing: norms, rates, kinetic energy, eigenvalue probes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import eos as eos_mod
from .mesh import DgField, Discretization


class DiagnosticsError(ValueError):
    pass


@dataclass
class RateTable:
    """Norms over a refinement or Mach sequence with consecutive-row rates."""

    abscissae: np.ndarray
    norms: dict
    rates: dict = field(default_factory=dict)

    def row(self, i: int) -> dict:
        out = {"abscissa": self.abscissae[i]}
        for k, v in self.norms.items():
            out[k] = v[i]
            out["rate_" + k] = self.rates[k][i]
        return out


def _rates(values, ratios):
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0.0):
        raise DiagnosticsError("rates require positive norms/errors")
    out = np.full(len(values), np.nan)
    out[1:] = np.log(values[:-1] / values[1:]) / np.log(ratios)
    return out


def convergence_rates(errors, factor: float = 2.0, n_elems=None) -> RateTable:
    """Observed orders between consecutive mesh refinements.

    `errors` may be a single sequence or a dict of named sequences; `factor`
    is the per-row refinement ratio (2 for mesh doubling).
    """
    named = errors if isinstance(errors, dict) else {"err": errors}
    n = len(next(iter(named.values())))
    if n < 2:
        raise DiagnosticsError("need at least two entries to compute rates")
    absc = np.asarray(n_elems if n_elems is not None else factor**np.arange(n), dtype=float)
    table = RateTable(abscissae=absc, norms={k: np.asarray(v, float) for k, v in named.items()})
    for k, v in table.norms.items():
        table.rates[k] = _rates(v, factor)
    return table


def mach_scaling(machs, norms) -> RateTable:
    """Scaling exponents of norms against a decreasing Mach sequence."""
    machs = np.asarray(machs, dtype=float)
    if len(machs) < 2 or np.any(np.diff(machs) >= 0.0):
        raise DiagnosticsError("Mach numbers must be strictly decreasing")
    named = norms if isinstance(norms, dict) else {"norm": norms}
    ratios = machs[:-1] / machs[1:]
    table = RateTable(abscissae=machs, norms={k: np.asarray(v, float) for k, v in named.items()})
    for k, v in table.norms.items():
        table.rates[k] = _rates(v, ratios)
    return table


# ---------------------------------------------------------------------------
# field diagnostics
# ---------------------------------------------------------------------------

def kinetic_energy(disc: Discretization, rho: DgField, u: DgField) -> float:
    """int 1/2 rho |u|^2 by overintegrated quadrature."""
    rho_v = disc.vol_scalar(rho.values)
    u_v = disc.vol_vector(u.values)
    return 0.5 * disc.integrate(rho_v * np.sum(u_v**2, axis=2))


def divergence_l2(disc: Discretization, u: DgField) -> float:
    """Broken L2 norm of div(u) from the elementwise nodal polynomial."""
    div_v = np.zeros((disc.mesh.n_elements, len(disc.w_vol)))
    for k in range(disc.dim):
        div_v += u.values[:, :, k] @ disc.Gu[k].T
    return float(np.sqrt(max(disc.integrate(div_v**2), 0.0)))


def density_gradient_l2(disc: Discretization, rho: DgField) -> float:
    """Broken L2 norm of grad(rho)."""
    total = np.zeros((disc.mesh.n_elements, len(disc.w_vol)))
    for k in range(disc.dim):
        total += (rho.values @ disc.Gp[k].T)**2
    return float(np.sqrt(max(disc.integrate(total), 0.0)))


def local_mach(disc: Discretization, rho: DgField, u: DgField, p: DgField, M, eosp) -> DgField:
    """Nodal field of M_loc = M |u| / c on the scalar space."""
    u_at_p = np.matmul(disc.u_at_pnodes[None, :, :], u.values)
    speed = np.sqrt(np.sum(u_at_p**2, axis=2))
    c = np.sqrt(eos_mod.sound_speed_sq(eosp, rho.values, p.values))
    return DgField(disc.mesh, disc.basis_p, 1, M * speed / c)


# ---------------------------------------------------------------------------
# quasi-linear eigenvalue probes (1D subsystems of the IMEX splitting)
# ---------------------------------------------------------------------------

def eigenvalues_implicit(rho, u, p, M, eosp):
    """Eigenvalues (l-, 0, l+) of the implicitly treated subsystem.

    l(+/-) = u/2 +/- sqrt(c^2/M^2 + u^2/4); real whenever c^2 > 0.
    """
    c2 = eos_mod.sound_speed_sq(eosp, rho, p)
    root = np.sqrt(c2 / M**2 + u**2 / 4.0)
    return u / 2.0 - root, np.zeros_like(root), u / 2.0 + root


def eigenvalues_explicit(u):
    """Eigenvalues (0, u, u) of the explicitly treated (pressureless) subsystem.

    The repeated eigenvalue is defective: the subsystem is only weakly
    hyperbolic.
    """
    u = np.asarray(u, dtype=float)
    return np.zeros_like(u), u, u


def quasi_linear_matrices(rho, u, p, M, eosp):
    """The 3x3 primitive-variable matrices (A_implicit, A_explicit) in 1D."""
    # (p/rho - rho de/drho)/(de/dp) equals rho c^2 for any admissible EOS
    rc2 = rho * eos_mod.sound_speed_sq(eosp, rho, p)
    A_imp = np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0 / (rho * M**2)],
        [0.0, rc2, u],
    ])
    A_exp = np.array([
        [u, rho, 0.0],
        [0.0, u, 0.0],
        [0.0, 0.0, 0.0],
    ])
    return A_imp, A_exp
