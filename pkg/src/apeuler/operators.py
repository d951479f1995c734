"""DG spatial operators for one IMEX stage.

Explicit convective residuals use a Mach-blended flux: a centered flux plus
lambda/2 times the jump of the advected quantity, with

    lambda = max_sides f(M_loc) (|u| + c/M),   f(M_loc) = min(1, M_loc),
    M_loc = M |u| / c,

which interpolates between a centered flux (M_loc -> 0) and a Rusanov flux
(M_loc >= 1).  The implicitly treated pressure gradient and enthalpy flux use
purely centered fluxes and are exposed both as matrix-free applications and
as assembled sparse matrices (used by the preconditioner and in tests).

Residual orientation: every residual R returned here is the right-hand-side
contribution of minus the divergence, i.e. the weak form of -div(flux):

    R_i = int flux . grad(psi_i) - sum_faces int ({{flux}} + lambda/2 [[q]]) . [[psi_i]]

Boundary faces of non-periodic axes enter through ghost states supplied by
boundary conditions; centered fluxes average interior and ghost values.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import eos as eos_mod
from .mesh import Discretization


class OperatorError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundarySpec:
    """Ghost-state prescription on one boundary; None means extrapolate.

    Each callable takes the time and returns the prescribed value (scalar,
    or a length-d vector for u).
    """

    rho: object = None
    u: object = None
    p: object = None


def _ghost_state(bc: BoundarySpec | None, t: float, rho_i, u_i, p_i):
    """Resolve ghost (rho, u, p) from a BoundarySpec and interior traces."""
    if bc is None:
        return rho_i, u_i, p_i
    rho_g = np.full_like(rho_i, float(bc.rho(t))) if bc.rho is not None else rho_i
    p_g = np.full_like(p_i, float(bc.p(t))) if bc.p is not None else p_i
    if bc.u is not None:
        uval = np.atleast_1d(np.asarray(bc.u(t), dtype=float))
        u_g = np.broadcast_to(uval, u_i.shape).copy()
    else:
        u_g = u_i
    return rho_g, u_g, p_g


# ---------------------------------------------------------------------------
# blended numerical dissipation
# ---------------------------------------------------------------------------

def blended_lambda_values(eosp, M, rho_p, u_p, p_p, rho_m, u_m, p_m):
    """Blended dissipation speed from (rho, u, p) samples on both sides."""
    def side(rho, u, p):
        c = np.sqrt(eos_mod.sound_speed_sq(eosp, rho, p))
        speed = np.linalg.norm(u, axis=-1) if u.ndim == rho.ndim + 1 else np.abs(u)
        m_loc = M * speed / c
        return np.minimum(1.0, m_loc) * (speed + c / M)
    return np.maximum(side(rho_p, u_p, p_p), side(rho_m, u_m, p_m))


def rusanov_lambda_values(eosp, M, rho_p, u_p, p_p, rho_m, u_m, p_m):
    """Full Rusanov speed |u| + c/M (explicit reference scheme)."""
    def side(rho, u, p):
        c = np.sqrt(eos_mod.sound_speed_sq(eosp, rho, p))
        speed = np.linalg.norm(u, axis=-1) if u.ndim == rho.ndim + 1 else np.abs(u)
        return speed + c / M
    return np.maximum(side(rho_p, u_p, p_p), side(rho_m, u_m, p_m))


def blended_lambda(state_plus, state_minus, M, eosp):
    """Scalar convenience wrapper; states are (rho, u, p) with u a d-vector."""
    rho_p, u_p, p_p = state_plus
    rho_m, u_m, p_m = state_minus
    lam = blended_lambda_values(eosp, M,
                                np.atleast_1d(float(rho_p)), np.atleast_2d(u_p).astype(float),
                                np.atleast_1d(float(p_p)),
                                np.atleast_1d(float(rho_m)), np.atleast_2d(u_m).astype(float),
                                np.atleast_1d(float(p_m)))
    return float(lam[0])


# ---------------------------------------------------------------------------
# state evaluation at quadrature points
# ---------------------------------------------------------------------------

class StateEval:
    """Samples of (rho, u, p) and EOS-derived quantities at quadrature points.

    Face data live on interior face pairs (sides L/R) and on boundary faces
    (interior side plus ghost side from the boundary conditions at time t).
    """

    def __init__(self, disc: Discretization, eosp, M, rho, u, p, t=0.0, bcs=None,
                 full_lambda=False):
        self.disc = disc
        self.eosp = eosp
        self.M = M
        lam_fn = rusanov_lambda_values if full_lambda else blended_lambda_values

        self.rho_v = disc.vol_scalar(rho)
        self.u_v = disc.vol_vector(u)
        self.p_v = disc.vol_scalar(p)
        self.e_v = eos_mod.internal_energy(eosp, self.rho_v, self.p_v)
        self.h_v = self.e_v + self.p_v / self.rho_v
        self.k_v = 0.5 * np.sum(self.u_v**2, axis=2)

        self.faces = []
        for ax in range(disc.dim):
            eL, eR = disc.topo.interior[ax]
            f = SimpleNamespace()
            f.rhoL = disc.face_scalar(rho, ax, "hi", eL)
            f.rhoR = disc.face_scalar(rho, ax, "lo", eR)
            f.uL = disc.face_vector(u, ax, "hi", eL)
            f.uR = disc.face_vector(u, ax, "lo", eR)
            f.pL = disc.face_scalar(p, ax, "hi", eL)
            f.pR = disc.face_scalar(p, ax, "lo", eR)
            f.eL = eos_mod.internal_energy(eosp, f.rhoL, f.pL)
            f.eR = eos_mod.internal_energy(eosp, f.rhoR, f.pR)
            f.hL = f.eL + f.pL / f.rhoL
            f.hR = f.eR + f.pR / f.rhoR
            f.kL = 0.5 * np.sum(f.uL**2, axis=2)
            f.kR = 0.5 * np.sum(f.uR**2, axis=2)
            f.lam = lam_fn(eosp, M, f.rhoL, f.uL, f.pL, f.rhoR, f.uR, f.pR)
            self.faces.append(f)

        self.bfaces = {}
        for ax in range(disc.dim):
            for side, elems in zip(("lo", "hi"), disc.topo.boundary[ax]):
                if len(elems) == 0:
                    continue
                bc = (bcs or {}).get((ax, side))
                g = SimpleNamespace(elems=elems, side=side, ax=ax, bc=bc)
                g.rho_i = disc.face_scalar(rho, ax, side, elems)
                g.u_i = disc.face_vector(u, ax, side, elems)
                g.p_i = disc.face_scalar(p, ax, side, elems)
                g.rho_g, g.u_g, g.p_g = _ghost_state(bc, t, g.rho_i, g.u_i, g.p_i)
                g.e_i = eos_mod.internal_energy(eosp, g.rho_i, g.p_i)
                g.e_g = eos_mod.internal_energy(eosp, g.rho_g, g.p_g)
                g.h_i = g.e_i + g.p_i / g.rho_i
                g.h_g = g.e_g + g.p_g / g.rho_g
                g.k_i = 0.5 * np.sum(g.u_i**2, axis=2)
                g.k_g = 0.5 * np.sum(g.u_g**2, axis=2)
                g.lam = lam_fn(eosp, M, g.rho_i, g.u_i, g.p_i, g.rho_g, g.u_g, g.p_g)
                self.bfaces[(ax, side)] = g


# ---------------------------------------------------------------------------
# low-level scatter kernels
# ---------------------------------------------------------------------------

def _scatter_interior(disc, R, ax, value, space):
    """Add -int value psi^L and +int value psi^R over all interior faces of an axis.

    `value` holds ({{flux_n}} + lambda/2 (q_L - q_R)) at the face quadrature
    points, shape (n_faces, nq_face).  Works because every element appears
    exactly once as L and once as R per periodic axis (unique indices).
    """
    eL, eR = disc.topo.interior[ax]
    T = (disc.Tp if space == "p" else disc.Tu)[ax]
    w = disc.w_face[ax]
    vw = value * w[None, :]
    R[eL] -= vw @ T["hi"]
    R[eR] += vw @ T["lo"]


def _scatter_boundary(disc, R, ax, side, elems, value, space):
    """Boundary-face version of _scatter_interior (interior side only)."""
    T = (disc.Tp if space == "p" else disc.Tu)[ax][side]
    w = disc.w_face[ax]
    vw = value * w[None, :]
    if side == "hi":      # outward normal +e_ax
        R[elems] -= vw @ T
    else:                 # outward normal -e_ax
        R[elems] += vw @ T


def _volume_div(disc, flux_v, space):
    """int flux . grad(psi_i) from flux values (e, q, d)."""
    G = disc.Gp if space == "p" else disc.Gu
    n = disc.n_p if space == "p" else disc.n_u
    R = np.zeros((disc.mesh.n_elements, n))
    for k in range(disc.dim):
        R += (flux_v[:, :, k] * disc.w_vol[None, :]) @ G[k]
    return R


def advect_residual(disc, flux_v, face_flux, face_jump, space):
    """Generic weak residual of -div(flux) with interface dissipation.

    flux_v: (e, q, d) volume flux samples.
    face_flux[ax] = (F_L, F_R): normal-direction flux samples per side, or a
        callable-free tuple of (n_faces, nq) arrays for the axis component.
    face_jump[ax] = (lam, q_L, q_R) or None for no dissipation.
    Boundary contributions must be added separately.
    """
    R = _volume_div(disc, flux_v, space)
    for ax in range(disc.dim):
        FL, FR = face_flux[ax]
        value = 0.5 * (FL + FR)
        if face_jump is not None and face_jump[ax] is not None:
            lam, qL, qR = face_jump[ax]
            value = value + 0.5 * lam * (qL - qR)
        _scatter_interior(disc, R, ax, value, space)
    return R


def _boundary_advect(disc, R, st: StateEval, flux_of, jump_of, space, scale=1.0):
    """Add boundary-face flux/dissipation terms for a generic advected quantity.

    flux_of(g, which) returns the normal flux samples for side "i"/"g";
    jump_of(g, which) the dissipated quantity (or None for no dissipation).
    """
    for (ax, side), g in st.bfaces.items():
        Fi = flux_of(g, "i", ax)
        Fg = flux_of(g, "g", ax)
        value = 0.5 * (Fi + Fg)
        if jump_of is not None:
            qi = jump_of(g, "i")
            qg = jump_of(g, "g")
            # jump is (interior - ghost) on a hi face and (ghost - interior) on lo
            sgn = 1.0 if side == "hi" else -1.0
            value = value + 0.5 * g.lam * sgn * (qi - qg)
        _scatter_boundary(disc, R, ax, side, g.elems, scale * value, space)
    return R


# ---------------------------------------------------------------------------
# explicit residuals
# ---------------------------------------------------------------------------

def density_residual(disc, st: StateEval):
    """Weak form of -div(rho u) with lambda/2 [[rho]] dissipation, on the scalar space."""
    flux_v = st.rho_v[:, :, None] * st.u_v
    face_flux = []
    face_jump = []
    for ax in range(disc.dim):
        f = st.faces[ax]
        face_flux.append((f.rhoL * f.uL[:, :, ax], f.rhoR * f.uR[:, :, ax]))
        face_jump.append((f.lam, f.rhoL, f.rhoR))
    R = advect_residual(disc, flux_v, face_flux, face_jump, "p")
    _boundary_advect(disc, R, st,
                     lambda g, w, ax: (g.rho_i * g.u_i[:, :, ax] if w == "i"
                                       else g.rho_g * g.u_g[:, :, ax]),
                     lambda g, w: g.rho_i if w == "i" else g.rho_g, "p")
    return R


def momentum_residual(disc, st: StateEval):
    """Weak form of -div(rho u x u) with lambda/2 <<rho u>> dissipation, (e, nu, d)."""
    R = np.zeros((disc.mesh.n_elements, disc.n_u, disc.dim))
    for k in range(disc.dim):
        flux_v = (st.rho_v * st.u_v[:, :, k])[:, :, None] * st.u_v
        face_flux = []
        face_jump = []
        for ax in range(disc.dim):
            f = st.faces[ax]
            face_flux.append((f.rhoL * f.uL[:, :, k] * f.uL[:, :, ax],
                              f.rhoR * f.uR[:, :, k] * f.uR[:, :, ax]))
            face_jump.append((f.lam, f.rhoL * f.uL[:, :, k], f.rhoR * f.uR[:, :, k]))
        Rk = advect_residual(disc, flux_v, face_flux, face_jump, "u")
        _boundary_advect(disc, Rk, st,
                         lambda g, w, ax, k=k: (g.rho_i * g.u_i[:, :, k] * g.u_i[:, :, ax]
                                                if w == "i"
                                                else g.rho_g * g.u_g[:, :, k] * g.u_g[:, :, ax]),
                         lambda g, w, k=k: (g.rho_i * g.u_i[:, :, k] if w == "i"
                                            else g.rho_g * g.u_g[:, :, k]), "u")
        R[:, :, k] = Rk
    return R


def kinetic_residual(disc, st: StateEval):
    """Weak form of -M^2 div(k rho u) with M^2 lambda/2 [[rho k]] dissipation."""
    M2 = st.M**2
    flux_v = (st.rho_v * st.k_v)[:, :, None] * st.u_v
    face_flux = []
    face_jump = []
    for ax in range(disc.dim):
        f = st.faces[ax]
        face_flux.append((f.rhoL * f.kL * f.uL[:, :, ax], f.rhoR * f.kR * f.uR[:, :, ax]))
        face_jump.append((f.lam, f.rhoL * f.kL, f.rhoR * f.kR))
    R = advect_residual(disc, flux_v, face_flux, face_jump, "p")
    _boundary_advect(disc, R, st,
                     lambda g, w, ax: (g.rho_i * g.k_i * g.u_i[:, :, ax] if w == "i"
                                       else g.rho_g * g.k_g * g.u_g[:, :, ax]),
                     lambda g, w: g.rho_i * g.k_i if w == "i" else g.rho_g * g.k_g, "p")
    return M2 * R


def enthalpy_residual(disc, st: StateEval):
    """Weak form of -div(h rho u), centered flux plus lambda/2 [[rho e]] dissipation."""
    flux_v = (st.rho_v * st.h_v)[:, :, None] * st.u_v
    face_flux = []
    face_jump = []
    for ax in range(disc.dim):
        f = st.faces[ax]
        face_flux.append((f.rhoL * f.hL * f.uL[:, :, ax], f.rhoR * f.hR * f.uR[:, :, ax]))
        face_jump.append((f.lam, f.rhoL * f.eL, f.rhoR * f.eR))
    R = advect_residual(disc, flux_v, face_flux, face_jump, "p")
    _boundary_advect(disc, R, st,
                     lambda g, w, ax: (g.rho_i * g.h_i * g.u_i[:, :, ax] if w == "i"
                                       else g.rho_g * g.h_g * g.u_g[:, :, ax]),
                     lambda g, w: g.rho_i * g.e_i if w == "i" else g.rho_g * g.e_g, "p")
    return R


def pressure_gradient_residual(disc, st: StateEval):
    """Weak form of -(1/M^2) grad p with a centered face average, (e, nu, d)."""
    M2 = st.M**2
    R = np.zeros((disc.mesh.n_elements, disc.n_u, disc.dim))
    for k in range(disc.dim):
        R[:, :, k] = (st.p_v * disc.w_vol[None, :]) @ disc.Gu[k]
    for ax in range(disc.dim):
        f = st.faces[ax]
        pbar = 0.5 * (f.pL + f.pR)
        Rk = np.zeros((disc.mesh.n_elements, disc.n_u))
        _scatter_interior(disc, Rk, ax, pbar, "u")
        R[:, :, ax] += Rk
    for (ax, side), g in st.bfaces.items():
        pbar = 0.5 * (g.p_i + g.p_g)
        Rk = np.zeros((disc.mesh.n_elements, disc.n_u))
        _scatter_boundary(disc, Rk, ax, side, g.elems, pbar, "u")
        R[:, :, ax] += Rk
    return R / M2


def explicit_residuals(disc, st: StateEval):
    """(density, momentum convection, kinetic-energy-flux) residual triple."""
    return density_residual(disc, st), momentum_residual(disc, st), kinetic_residual(disc, st)


def full_explicit_residuals(disc, st: StateEval):
    """Residuals of the fully explicit scheme: all fluxes with Rusanov dissipation.

    Returns (R_rho, R_mom, R_E) for the conserved variables
    (rho, rho u, rho E = rho e + M^2 rho k); `st` must be built with
    full_lambda=True.
    """
    M2 = st.M**2
    R_rho = density_residual(disc, st)

    # momentum: rho u_k u + (p / M^2) delta, dissipation on rho u_k
    R_mom = momentum_residual(disc, st)
    R_mom += pressure_gradient_residual(disc, st)

    # energy: (h + M^2 k) rho u, dissipation on rho e + M^2 rho k
    flux_v = (st.rho_v * (st.h_v + M2 * st.k_v))[:, :, None] * st.u_v
    face_flux = []
    face_jump = []
    for ax in range(disc.dim):
        f = st.faces[ax]
        face_flux.append((f.rhoL * (f.hL + M2 * f.kL) * f.uL[:, :, ax],
                          f.rhoR * (f.hR + M2 * f.kR) * f.uR[:, :, ax]))
        face_jump.append((f.lam, f.rhoL * (f.eL + M2 * f.kL), f.rhoR * (f.eR + M2 * f.kR)))
    R_E = advect_residual(disc, flux_v, face_flux, face_jump, "p")
    _boundary_advect(disc, R_E, st,
                     lambda g, w, ax: (g.rho_i * (g.h_i + M2 * g.k_i) * g.u_i[:, :, ax]
                                       if w == "i"
                                       else g.rho_g * (g.h_g + M2 * g.k_g) * g.u_g[:, :, ax]),
                     lambda g, w: (g.rho_i * (g.e_i + M2 * g.k_i) if w == "i"
                                   else g.rho_g * (g.e_g + M2 * g.k_g)), "p")
    return R_rho, R_mom, R_E


# ---------------------------------------------------------------------------
# implicit stage system
# ---------------------------------------------------------------------------

def _weighted_blocks(V, w):
    """Batched V^T diag(w_e) V over elements; w (e, q) -> (e, n, n) via BLAS."""
    X = w[:, :, None] * V[None, :, :]
    return np.matmul(V.T[None, :, :], X)


def assemble_A_blocks(disc, rho_v):
    """Density-weighted velocity mass blocks, (e, nu, nu); SPD for rho > 0."""
    if np.min(rho_v) <= 0.0:
        raise OperatorError("non-positive density in the velocity mass operator")
    return _weighted_blocks(disc.Vu, rho_v * disc.w_vol[None, :])


def assemble_scalar_mass_blocks(disc, weight_v):
    """Weighted scalar mass blocks on the pressure space, (e, np, np)."""
    return _weighted_blocks(disc.Vp, weight_v * disc.w_vol[None, :])


class StageSystem:
    """Implicit operators of one IMEX stage and their matrix-free application.

    The pressure-velocity system reads

        A U + B P = F,    D P + C U = G,

    where A is the stage-density weighted velocity mass operator, B the
    pressure-gradient operator scaled by at_ll*dt/M^2, C the enthalpy-flux
    operator scaled by at_ll*dt, and D the alpha(rho)-weighted pressure mass
    coming from the affine split rho e = alpha p + beta (beta is moved into
    the right-hand side).  C and the lagged parts of G are refreshed per
    Picard iterate via set_lagged().
    """

    def __init__(self, disc: Discretization, eosp, M, coef, rho, bcs=None, t_stage=0.0):
        self.disc = disc
        self.eosp = eosp
        self.M = M
        self.coef = coef          # at_ll * dt
        self.bcs = bcs or {}
        self.t_stage = t_stage

        self.rho_v = disc.vol_scalar(rho)
        if np.min(self.rho_v) <= 0.0:
            raise OperatorError("non-positive stage density")
        alpha_v, beta_v = eos_mod.rho_e_affine(eosp, self.rho_v)
        self.A_blocks = assemble_A_blocks(disc, self.rho_v)
        self.A_inv = np.linalg.inv(self.A_blocks)
        self.D_blocks = assemble_scalar_mass_blocks(disc, alpha_v)
        self.beta_vec = disc.mass_rhs(beta_v * np.ones_like(self.rho_v))

        # stage-density traces for the enthalpy weight
        self.rho_fL = []
        self.rho_fR = []
        for ax in range(disc.dim):
            eL, eR = disc.topo.interior[ax]
            self.rho_fL.append(disc.face_scalar(rho, ax, "hi", eL))
            self.rho_fR.append(disc.face_scalar(rho, ax, "lo", eR))
        self.rho_b = {}
        self.b_struct = {}
        for ax in range(disc.dim):
            for side, elems in zip(("lo", "hi"), disc.topo.boundary[ax]):
                if len(elems) == 0:
                    continue
                bc = self.bcs.get((ax, side))
                rho_i = disc.face_scalar(rho, ax, side, elems)
                rho_g = (np.full_like(rho_i, float(bc.rho(t_stage)))
                         if bc is not None and bc.rho is not None else rho_i)
                self.rho_b[(ax, side)] = (rho_i, rho_g)
                nqf = rho_i.shape[1]
                self.b_struct[(ax, side)] = SimpleNamespace(
                    elems=elems,
                    p_prescribed=bc is not None and bc.p is not None,
                    u_prescribed=bc is not None and bc.u is not None,
                    p_bc=(np.full((len(elems), nqf), float(bc.p(t_stage)))
                          if bc is not None and bc.p is not None else None),
                )

        self._lag = None

    # -- lagged Picard data --------------------------------------------------

    def set_lagged(self, p, u):
        """Refresh enthalpy weights, current-stage dissipation and kinetic term."""
        disc = self.disc
        lag = SimpleNamespace()
        p_v = disc.vol_scalar(p)
        u_v = disc.vol_vector(u)
        h_v = eos_mod.enthalpy(self.eosp, self.rho_v, p_v)
        lag.w_v = self.rho_v * h_v                       # volume weight rho*h
        lag.k_v = 0.5 * np.sum(u_v**2, axis=2)

        lag.faces = []
        for ax in range(disc.dim):
            eL, eR = disc.topo.interior[ax]
            f = SimpleNamespace()
            pL = disc.face_scalar(p, ax, "hi", eL)
            pR = disc.face_scalar(p, ax, "lo", eR)
            uL = disc.face_vector(u, ax, "hi", eL)
            uR = disc.face_vector(u, ax, "lo", eR)
            eLv = eos_mod.internal_energy(self.eosp, self.rho_fL[ax], pL)
            eRv = eos_mod.internal_energy(self.eosp, self.rho_fR[ax], pR)
            f.wL = self.rho_fL[ax] * (eLv + pL / self.rho_fL[ax])
            f.wR = self.rho_fR[ax] * (eRv + pR / self.rho_fR[ax])
            f.rhoeL = self.rho_fL[ax] * eLv
            f.rhoeR = self.rho_fR[ax] * eRv
            f.lam = blended_lambda_values(self.eosp, self.M,
                                          self.rho_fL[ax], uL, pL,
                                          self.rho_fR[ax], uR, pR)
            lag.faces.append(f)

        lag.bfaces = {}
        for (ax, side), (rho_i, rho_g) in self.rho_b.items():
            bc = self.bcs.get((ax, side))
            elems = dict(zip(("lo", "hi"), disc.topo.boundary[ax]))[side]
            g = SimpleNamespace(elems=elems)
            p_i = disc.face_scalar(p, ax, side, elems)
            u_i = disc.face_vector(u, ax, side, elems)
            _, u_g, p_g = _ghost_state(bc, self.t_stage, rho_i, u_i, p_i)
            g.p_prescribed = bc is not None and bc.p is not None
            g.u_prescribed = bc is not None and bc.u is not None
            g.u_bc = u_g if g.u_prescribed else None
            e_i = eos_mod.internal_energy(self.eosp, rho_i, p_i)
            e_g = eos_mod.internal_energy(self.eosp, rho_g, p_g)
            g.w_i = rho_i * (e_i + p_i / rho_i)
            g.w_g = rho_g * (e_g + p_g / rho_g)
            g.rhoe_i = rho_i * e_i
            g.rhoe_g = rho_g * e_g
            g.p_bc = np.full_like(p_i, float(bc.p(self.t_stage))) if g.p_prescribed else None
            g.lam = blended_lambda_values(self.eosp, self.M, rho_i, u_i, p_i,
                                          rho_g, u_g, p_g)
            lag.bfaces[(ax, side)] = g

        self._lag = lag
        return lag

    # -- operator applications ----------------------------------------------

    def apply_A_inv(self, v):
        return np.matmul(self.A_inv, v)

    def apply_A(self, v):
        return np.matmul(self.A_blocks, v)

    def apply_D(self, p_coeffs):
        return np.matmul(self.D_blocks, p_coeffs[:, :, None])[:, :, 0]

    def apply_B(self, p_coeffs):
        """B P = -coef/M^2 (weak gradient of the stage pressure), (e, nu, d).

        Boundary faces with prescribed pressure keep only the interior half
        of the centered average (the data half lives in bc_rhs_momentum).
        """
        disc = self.disc
        p_v = disc.vol_scalar(p_coeffs)
        R = np.zeros((disc.mesh.n_elements, disc.n_u, disc.dim))
        for k in range(disc.dim):
            R[:, :, k] = (p_v * disc.w_vol[None, :]) @ disc.Gu[k]
        for ax in range(disc.dim):
            eL, eR = disc.topo.interior[ax]
            pbar = 0.5 * (disc.face_scalar(p_coeffs, ax, "hi", eL)
                          + disc.face_scalar(p_coeffs, ax, "lo", eR))
            Rk = np.zeros((disc.mesh.n_elements, disc.n_u))
            _scatter_interior(disc, Rk, ax, pbar, "u")
            R[:, :, ax] += Rk
        for (ax, side), g in self.b_struct.items():
            p_i = disc.face_scalar(p_coeffs, ax, side, g.elems)
            pbar = 0.5 * p_i if g.p_prescribed else p_i
            Rk = np.zeros((disc.mesh.n_elements, disc.n_u))
            _scatter_boundary(disc, Rk, ax, side, g.elems, pbar, "u")
            R[:, :, ax] += Rk
        return -(self.coef / self.M**2) * R

    def bc_rhs_momentum(self):
        """Known boundary-pressure contribution moved to the momentum RHS."""
        disc = self.disc
        R = np.zeros((disc.mesh.n_elements, disc.n_u, disc.dim))
        for (ax, side), g in self.b_struct.items():
            if not g.p_prescribed:
                continue
            Rk = np.zeros((disc.mesh.n_elements, disc.n_u))
            _scatter_boundary(disc, Rk, ax, side, g.elems, 0.5 * g.p_bc, "u")
            R[:, :, ax] += Rk
        return (self.coef / self.M**2) * R

    def apply_C(self, u_coeffs):
        """C U = -coef (weak divergence of rho h u with centered flux), (e, np).

        Boundary faces with prescribed velocity keep only the interior half
        of the centered average (data half in bc_rhs_energy).
        """
        disc = self.disc
        lag = self._lag
        u_v = disc.vol_vector(u_coeffs)
        flux_v = lag.w_v[:, :, None] * u_v
        R = _volume_div(disc, flux_v, "p")
        for ax in range(disc.dim):
            eL, eR = disc.topo.interior[ax]
            f = lag.faces[ax]
            uL = disc.face_vector(u_coeffs, ax, "hi", eL)
            uR = disc.face_vector(u_coeffs, ax, "lo", eR)
            value = 0.5 * (f.wL * uL[:, :, ax] + f.wR * uR[:, :, ax])
            _scatter_interior(disc, R, ax, value, "p")
        for (ax, side), g in lag.bfaces.items():
            u_i = disc.face_vector(u_coeffs, ax, side, g.elems)
            if g.u_prescribed:
                value = 0.5 * g.w_i * u_i[:, :, ax]
            else:
                value = 0.5 * (g.w_i + g.w_g) * u_i[:, :, ax]
            _scatter_boundary(disc, R, ax, side, g.elems, value, "p")
        return -self.coef * R

    def bc_rhs_energy(self):
        """Known boundary-velocity contribution moved to the energy RHS."""
        disc = self.disc
        R = np.zeros((disc.mesh.n_elements, disc.n_p))
        for (ax, side), g in (self._lag.bfaces if self._lag else {}).items():
            if not g.u_prescribed:
                continue
            value = 0.5 * g.w_g * g.u_bc[:, :, ax]
            _scatter_boundary(disc, R, ax, side, g.elems, value, "p")
        return self.coef * R

    def lagged_g_terms(self):
        """Picard-lagged right-hand-side pieces of the energy equation:

        -int M^2 rho k Psi  -  coef * lambda/2 [[rho e]] jump terms  -  beta,
        plus the boundary-velocity data term.
        """
        disc = self.disc
        lag = self._lag
        out = -self.M**2 * disc.mass_rhs(self.rho_v * lag.k_v) - self.beta_vec
        J = np.zeros((disc.mesh.n_elements, disc.n_p))
        for ax in range(disc.dim):
            f = lag.faces[ax]
            value = 0.5 * f.lam * (f.rhoeL - f.rhoeR)
            _scatter_interior(disc, J, ax, value, "p")
        for (ax, side), g in lag.bfaces.items():
            sgn = 1.0 if side == "hi" else -1.0
            value = 0.5 * g.lam * sgn * (g.rhoe_i - g.rhoe_g)
            _scatter_boundary(disc, J, ax, side, g.elems, value, "p")
        out += self.coef * J
        return out + self.bc_rhs_energy()

    # -- Schur complement ----------------------------------------------------

    def schur_matvec(self, p_flat):
        p = p_flat.reshape(self.disc.mesh.n_elements, self.disc.n_p)
        w = self.apply_A_inv(self.apply_B(p))
        return (self.apply_D(p) - self.apply_C(w)).ravel()

    def solve_velocity(self, F, p_coeffs):
        """U = A^{-1} (F - B P)."""
        return self.apply_A_inv(F - self.apply_B(p_coeffs))

    # -- sparse assembly (preconditioner, tests) ------------------------------

    def assemble_B_sparse(self):
        return _assemble_grad_like(self.disc, self.b_struct, self.coef, self.M)

    def assemble_C_sparse(self):
        return _assemble_div_like(self.disc, self._lag, self.coef)

    def assemble_schur_sparse(self):
        """Explicit sparse Schur complement D - C A^{-1} B (CSR)."""
        import scipy.sparse as sp
        disc = self.disc
        ne, npp, nu, d = disc.mesh.n_elements, disc.n_p, disc.n_u, disc.dim
        D = sp.bsr_matrix((self.D_blocks, np.arange(ne), np.arange(ne + 1)),
                          shape=(ne * npp, ne * npp)).tocsr()
        # A^{-1} with component-fastest dof layout: kron(Ainv_e, I_d)
        Ainv_kron = np.einsum("eij,kl->eikjl", self.A_inv, np.eye(d)).reshape(ne, nu * d, nu * d)
        Ainv = sp.bsr_matrix((Ainv_kron, np.arange(ne), np.arange(ne + 1)),
                             shape=(ne * nu * d, ne * nu * d)).tocsr()
        B = self.assemble_B_sparse()
        C = self.assemble_C_sparse()
        S = (D - C @ (Ainv @ B)).tocsr()
        return S


def _udof(disc, elems, comp):
    """Flat velocity dof indices (component-fastest layout) for given elements."""
    nu, d = disc.n_u, disc.dim
    base = (np.asarray(elems)[:, None] * nu + np.arange(nu)[None, :]) * d + comp
    return base


def _assemble_grad_like(disc, b_struct, coef, M):
    """Sparse B: rows are velocity dofs, columns pressure dofs."""
    import scipy.sparse as sp
    ne, npp, nu, d = disc.mesh.n_elements, disc.n_p, disc.n_u, disc.dim
    rows, cols, vals = [], [], []
    scale = -coef / M**2

    # volume blocks: + int p dpsi/dx_k  (constant across elements)
    for k in range(d):
        blk = (disc.Gu[k] * disc.w_vol[:, None]).T @ disc.Vp  # (nu, np)
        e = np.arange(ne)
        r = _udof(disc, e, k)[:, :, None]                      # (ne, nu, 1)
        c = (e[:, None] * npp + np.arange(npp)[None, :])[:, None, :]
        rows.append(np.broadcast_to(r, (ne, nu, npp)).ravel())
        cols.append(np.broadcast_to(c, (ne, nu, npp)).ravel())
        vals.append(np.broadcast_to(scale * blk[None], (ne, nu, npp)).ravel())

    # interior faces: -(1/2)(p_hi-side + p_lo-side) against [[phi]]
    for ax in range(d):
        eL, eR = disc.topo.interior[ax]
        w = disc.w_face[ax]
        Tu_hi, Tu_lo = disc.Tu[ax]["hi"], disc.Tu[ax]["lo"]
        Tp_hi, Tp_lo = disc.Tp[ax]["hi"], disc.Tp[ax]["lo"]
        for test_elems, Ttest, tsgn in ((eL, Tu_hi, -1.0), (eR, Tu_lo, +1.0)):
            for trial_elems, Ttrial in ((eL, Tp_hi), (eR, Tp_lo)):
                blk = tsgn * 0.5 * (Ttest * w[:, None]).T @ Ttrial   # (nu, np)
                nf = len(test_elems)
                r = _udof(disc, test_elems, ax)[:, :, None]
                c = (np.asarray(trial_elems)[:, None] * npp + np.arange(npp)[None, :])[:, None, :]
                rows.append(np.broadcast_to(r, (nf, nu, npp)).ravel())
                cols.append(np.broadcast_to(c, (nf, nu, npp)).ravel())
                vals.append(np.broadcast_to(scale * blk[None], (nf, nu, npp)).ravel())

    # boundary faces (interior trial only; prescribed-p faces carry weight 1/2)
    for (ax, side), g in (b_struct or {}).items():
        w = disc.w_face[ax]
        Ttest = disc.Tu[ax][side]
        Ttrial = disc.Tp[ax][side]
        tsgn = -1.0 if side == "hi" else +1.0
        fac = 0.5 if g.p_prescribed else 1.0
        blk = tsgn * fac * (Ttest * w[:, None]).T @ Ttrial
        nf = len(g.elems)
        r = _udof(disc, g.elems, ax)[:, :, None]
        c = (np.asarray(g.elems)[:, None] * npp + np.arange(npp)[None, :])[:, None, :]
        rows.append(np.broadcast_to(r, (nf, nu, npp)).ravel())
        cols.append(np.broadcast_to(c, (nf, nu, npp)).ravel())
        vals.append(np.broadcast_to(scale * blk[None], (nf, nu, npp)).ravel())

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(ne * nu * d, ne * npp)).tocsr()


def _assemble_div_like(disc, lag, coef):
    """Sparse C: rows are pressure dofs, columns velocity dofs (rho*h weighted)."""
    import scipy.sparse as sp
    ne, npp, nu, d = disc.mesh.n_elements, disc.n_p, disc.n_u, disc.dim
    rows, cols, vals = [], [], []
    scale = -coef

    # volume: + int (rho h) u . grad Psi, weight varies per element
    for k in range(d):
        blk = np.einsum("eq,qi,qj->eij", lag.w_v * disc.w_vol[None, :], disc.Gp[k], disc.Vu,
                        optimize=True)   # (ne, np, nu)
        e = np.arange(ne)
        r = (e[:, None] * npp + np.arange(npp)[None, :])[:, :, None]
        c = _udof(disc, e, k)[:, None, :]
        rows.append(np.broadcast_to(r, (ne, npp, nu)).ravel())
        cols.append(np.broadcast_to(c, (ne, npp, nu)).ravel())
        vals.append((scale * blk).ravel())

    # interior faces: -(1/2) w_side u_side against [[Psi]]
    for ax in range(d):
        eL, eR = disc.topo.interior[ax]
        w = disc.w_face[ax]
        f = lag.faces[ax]
        Tp_hi, Tp_lo = disc.Tp[ax]["hi"], disc.Tp[ax]["lo"]
        Tu_hi, Tu_lo = disc.Tu[ax]["hi"], disc.Tu[ax]["lo"]
        for test_elems, Ttest, tsgn in ((eL, Tp_hi, -1.0), (eR, Tp_lo, +1.0)):
            for trial_elems, Ttrial, wgt in ((eL, Tu_hi, f.wL), (eR, Tu_lo, f.wR)):
                blk = tsgn * 0.5 * np.einsum("fq,qi,qj->fij", wgt * w[None, :], Ttest, Ttrial,
                                             optimize=True)
                nf = len(test_elems)
                r = (np.asarray(test_elems)[:, None] * npp + np.arange(npp)[None, :])[:, :, None]
                c = _udof(disc, trial_elems, ax)[:, None, :]
                rows.append(np.broadcast_to(r, (nf, npp, nu)).ravel())
                cols.append(np.broadcast_to(c, (nf, npp, nu)).ravel())
                vals.append((scale * blk).ravel())

    for (ax, side), g in (lag.bfaces if lag else {}).items():
        w = disc.w_face[ax]
        Ttest = disc.Tp[ax][side]
        Ttrial = disc.Tu[ax][side]
        tsgn = -1.0 if side == "hi" else +1.0
        wgt = 0.5 * g.w_i if g.u_prescribed else 0.5 * (g.w_i + g.w_g)
        blk = tsgn * np.einsum("fq,qi,qj->fij", wgt * w[None, :], Ttest, Ttrial, optimize=True)
        nf = len(g.elems)
        r = (np.asarray(g.elems)[:, None] * npp + np.arange(npp)[None, :])[:, :, None]
        c = _udof(disc, g.elems, ax)[:, None, :]
        rows.append(np.broadcast_to(r, (nf, npp, nu)).ravel())
        cols.append(np.broadcast_to(c, (nf, npp, nu)).ravel())
        vals.append((scale * blk).ravel())

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(ne * npp, ne * nu * d)).tocsr()
