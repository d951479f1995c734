"""IMEX time stepping: stage solves, Picard pressure iteration, time loop.

A step of the pair (A, b, c | At, bt, ct) advances (rho, u, p, rhoE):

* stage l: explicit density update, then a fixed-point iteration on the
  pressure Schur complement (D - C A^{-1} B) P = G - C A^{-1} F followed by
  the velocity back-substitution A U = F - B P;
* update: the generic b/bt-weighted combination of the stored explicit and
  implicit stage residuals applied to the conserved variables.

A fully explicit pair (zero implicit tableau) runs the same residuals with
the full Rusanov dissipation and no implicit solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics as diag
from . import eos as eos_mod
from . import operators as op
from . import tableau as tb
from .mesh import DgField, Discretization, l2_norm

log = logging.getLogger("apeuler")


class SolverAbort(RuntimeError):
    """Numerical failure; carries the step index at which it occurred."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


@dataclass
class SolverConfig:
    dt: float = 1e-2
    t_final: float = 1.0
    picard_tol: float = 1e-10
    picard_max: int = 10
    linear_tol: float = 1e-12
    linear_max: int = 400
    scheme: str = "ark3"
    preconditioner: str = "lu_cache"   # or "block_jacobi"
    instability_max: float = 1e6

    def __post_init__(self):
        if not (0.0 < self.picard_tol < 1.0 and 0.0 < self.linear_tol < 1.0):
            raise ValueError("tolerances must lie in (0, 1)")
        if self.picard_max < 1 or self.linear_max < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class SimState:
    """Non-dimensional fields at one time level."""

    t: float
    rho: DgField
    u: DgField
    p: DgField
    rho_E: DgField

    def copy(self) -> "SimState":
        return SimState(self.t, self.rho.copy(), self.u.copy(), self.p.copy(),
                        self.rho_E.copy())


def make_state(disc: Discretization, eosp, M, rho_fn, u_fn, p_fn, t=0.0) -> SimState:
    """Interpolate pointwise initial data and reconstruct the total energy."""
    pts_p = disc.nodes_p.reshape(-1, disc.dim)
    pts_u = disc.nodes_u.reshape(-1, disc.dim)
    ne = disc.mesh.n_elements
    rho = np.asarray(rho_fn(pts_p), float).reshape(ne, disc.n_p)
    p = np.asarray(p_fn(pts_p), float).reshape(ne, disc.n_p)
    u = np.asarray(u_fn(pts_u), float).reshape(ne, disc.n_u, disc.dim)
    state = SimState(
        t=t,
        rho=DgField(disc.mesh, disc.basis_p, 1, rho),
        u=DgField(disc.mesh, disc.basis_u, disc.dim, u, vector=True),
        p=DgField(disc.mesh, disc.basis_p, 1, p),
        rho_E=DgField(disc.mesh, disc.basis_p, 1, np.zeros_like(rho)),
    )
    reconstruct_energy(disc, eosp, M, state)
    return state


def reconstruct_energy(disc, eosp, M, state: SimState):
    """rho E = rho e(rho, p) + M^2 rho k, nodally on the scalar space."""
    u_at_p = np.matmul(disc.u_at_pnodes[None, :, :], state.u.values)
    k = 0.5 * np.sum(u_at_p**2, axis=2)
    alpha, beta = eos_mod.rho_e_affine(eosp, state.rho.values)
    state.rho_E.values = alpha * state.p.values + beta + M**2 * state.rho.values * k


def pressure_from_conserved(disc, eosp, M, rho, rho_E, u):
    """Nodal pressure from conserved fields (inverse of reconstruct_energy)."""
    u_at_p = np.matmul(disc.u_at_pnodes[None, :, :], u)
    k = 0.5 * np.sum(u_at_p**2, axis=2)
    return eos_mod.pressure_from_rho_e(eosp, rho, rho_E - M**2 * rho * k)


# ---------------------------------------------------------------------------
# Schur complement solver with cached factorization
# ---------------------------------------------------------------------------

class SchurSolver:
    """Preconditioned solve of the pressure Schur complement.

    The preconditioner is a cached sparse LU (or the element-block Jacobi
    inverse) of the assembled Schur matrix, refreshed only when convergence
    degrades; between refreshes the system drift is tiny for the low-Mach
    runs, so a defect-correction loop converges in one or two applications.
    At large acoustic Courant numbers the matrix-free operator has a
    floating-point noise floor that can sit above linear_tol * ||b||; a
    solve that stagnates below STAGNATION_ACCEPT relative residual is
    accepted as converged to working precision.  Restarted GMRES with the
    same preconditioner is the fallback when defect correction stalls.
    """

    STAGNATION_ACCEPT = 1e-8
    EXACTNESS_RATIO = 1e-2
    REBUILD_THRESHOLD = 6

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self._prec = None
        self._rebuild = True
        self._floor = 0.0   # observed noise floor of the matrix-free operator
        self.last_iters = 0

    def _build_preconditioner(self, system: op.StageSystem):
        S = system.assemble_schur_sparse()
        if self.cfg.preconditioner == "block_jacobi":
            disc = system.disc
            ne, npp = disc.mesh.n_elements, disc.n_p
            blocks = np.empty((ne, npp, npp))
            Sc = S.tocsr()
            for e in range(ne):
                sl = slice(e * npp, (e + 1) * npp)
                blocks[e] = Sc[sl, sl].toarray()
            inv = np.linalg.inv(blocks)

            def apply(x):
                return np.einsum("eij,ej->ei", inv, x.reshape(ne, npp)).ravel()

            self._apply_prec = apply
        else:
            lu = spla.splu(S.tocsc(), permc_spec="MMD_AT_PLUS_A")
            self._apply_prec = lu.solve
        self._prec = True
        self._rebuild = False

    def solve(self, system: op.StageSystem, rhs, x0):
        if self._prec is None or self._rebuild:
            self._build_preconditioner(system)
        b_norm = float(np.linalg.norm(rhs))
        if b_norm == 0.0:
            self.last_iters = 0
            return np.zeros_like(rhs)
        tol = self.cfg.linear_tol
        x = x0.copy()
        rebuilt = False
        rel_prev = np.inf
        best_ratio = np.inf
        iters = 0
        while iters < self.cfg.linear_max:
            r = rhs - system.schur_matvec(x)
            rel = float(np.linalg.norm(r)) / b_norm
            best_ratio = min(best_ratio, rel / rel_prev) if np.isfinite(rel_prev) else best_ratio
            if rel <= max(tol, 2.0 * self._floor):
                break
            if rel > 0.25 * rel_prev:   # contraction exhausted
                # a deep contraction earlier in this solve proves the cached
                # factorization matches the operator to working precision, so
                # the remaining residual is the matvec noise floor: accept it
                if best_ratio <= self.EXACTNESS_RATIO and rel <= self.STAGNATION_ACCEPT:
                    self._floor = min(max(self._floor, rel), 0.5 * self.STAGNATION_ACCEPT)
                    break
                if not rebuilt:
                    self._build_preconditioner(system)
                    rebuilt = True
                    rel_prev = np.inf
                    best_ratio = np.inf
                    continue
                return self._gmres_fallback(system, rhs, x, b_norm)
            x = x + self._apply_prec(r)
            rel_prev = rel
            iters += 1
        else:
            return self._gmres_fallback(system, rhs, x, b_norm)
        self.last_iters = iters
        if iters > self.REBUILD_THRESHOLD:
            self._rebuild = True
        return x

    def _gmres_fallback(self, system, rhs, x0, b_norm):
        n = rhs.size
        A = spla.LinearOperator((n, n), matvec=system.schur_matvec)
        Mop = spla.LinearOperator((n, n), matvec=self._apply_prec)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(A, rhs, x0=x0, rtol=self.cfg.linear_tol,
                             atol=self.STAGNATION_ACCEPT * b_norm,
                             restart=50, maxiter=max(1, self.cfg.linear_max // 50),
                             M=Mop, callback=cb, callback_type="legacy")
        rel = float(np.linalg.norm(rhs - system.schur_matvec(x))) / b_norm
        if info != 0 and rel > self.STAGNATION_ACCEPT:
            raise SolverAbort(
                f"linear solver breakdown (rel residual {rel:.3e} after GMRES fallback)")
        self.last_iters = count[0]
        self._rebuild = True
        return x


# ---------------------------------------------------------------------------
# IMEX stepping
# ---------------------------------------------------------------------------

@dataclass
class StageResiduals:
    """Weak residuals of one stage state, reused by later stages and the update."""

    r_rho: np.ndarray
    r_conv: np.ndarray
    r_p: np.ndarray
    r_h: np.ndarray
    r_k: np.ndarray


class ImexSolver:
    """Carries the discretization and per-run caches for IMEX stepping."""

    def __init__(self, disc: Discretization, eosp, M, tab: tb.ButcherPair,
                 cfg: SolverConfig, bcs=None):
        violations = tb.validate(tab)
        if violations:
            raise ValueError(f"invalid tableau {tab.name}: {violations}")
        self.disc = disc
        self.eosp = eosp
        self.M = M
        self.tab = tab
        self.cfg = cfg
        self.bcs = bcs or {}
        self.schur = SchurSolver(cfg)
        self.max_picard_last_step = 0
        self.linear_iters_last_step = 0

    # -- residual bookkeeping -------------------------------------------------

    def _residuals(self, rho, u, p, t) -> StageResiduals:
        st = op.StateEval(self.disc, self.eosp, self.M, rho, u, p, t=t, bcs=self.bcs)
        return StageResiduals(
            r_rho=op.density_residual(self.disc, st),
            r_conv=op.momentum_residual(self.disc, st),
            r_p=op.pressure_gradient_residual(self.disc, st),
            r_h=op.enthalpy_residual(self.disc, st),
            r_k=op.kinetic_residual(self.disc, st),
        )

    def _inner_products(self, state: SimState):
        """(int rho^n u^n . phi, int rho^n E^n Psi) from the time-level fields."""
        disc = self.disc
        rho_v = disc.vol_scalar(state.rho.values)
        u_v = disc.vol_vector(state.u.values)
        rhoE_v = disc.vol_scalar(state.rho_E.values)
        mom = np.stack([disc.mass_rhs(rho_v * u_v[:, :, k], "u") for k in range(disc.dim)],
                       axis=2)
        ene = disc.mass_rhs(rhoE_v, "p")
        return mom, ene

    # -- one stage -------------------------------------------------------------

    def stage_advance(self, state_n, mom_n, ene_n, resids, l, dt):
        """Solve stage l (0-based), returning the stage fields and residuals."""
        disc, tab = self.disc, self.tab
        A, At = tab.A, tab.At
        t_stage = state_n.t + tab.c[l] * dt

        # explicit density update
        rho_l = state_n.rho.values.copy()
        for m in range(l):
            if A[l, m] != 0.0:
                rho_l = rho_l + dt * A[l, m] * disc.apply_mass_inv(resids[m].r_rho, "p")
        if np.min(rho_l) <= 0.0:
            raise SolverAbort(f"negative density at stage {l + 1}")

        a_ll = At[l, l]
        if a_ll == 0.0:
            # no implicit work: stage state follows from the explicit sums alone
            if l == 0:
                return (state_n.rho.values, state_n.u.values,
                        state_n.p.values, state_n.rho_E.values)
            raise SolverAbort("zero implicit diagonal on a non-initial stage")

        # momentum and energy history
        F = mom_n.copy()
        G = ene_n.copy()
        for m in range(l):
            if A[l, m] != 0.0:
                F = F + dt * A[l, m] * resids[m].r_conv
                G = G + dt * A[l, m] * resids[m].r_k
            if At[l, m] != 0.0:
                F = F + dt * At[l, m] * resids[m].r_p
                G = G + dt * At[l, m] * resids[m].r_h

        system = op.StageSystem(disc, self.eosp, self.M, a_ll * dt,
                                rho_l, bcs=self.bcs, t_stage=t_stage)
        F_tot = F + system.bc_rhs_momentum()

        # Picard iteration, lagged at the previous stage values
        p_prev = state_n.p.values if l == 0 else self._stage_p
        u_prev = state_n.u.values if l == 0 else self._stage_u
        p_it = p_prev.copy()
        u_it = u_prev.copy()
        p_scale = max(float(np.sqrt(np.mean(p_it**2))), 1e-300)
        iters = 0
        for it in range(self.cfg.picard_max):
            system.set_lagged(p_it, u_it)
            g_tot = G + system.lagged_g_terms()
            rhs = (g_tot - system.apply_C(system.apply_A_inv(F_tot))).ravel()
            p_new = self.schur.solve(system, rhs, x0=p_it.ravel()).reshape(p_it.shape)
            u_it = system.solve_velocity(F_tot, p_new)
            self.linear_iters_last_step += self.schur.last_iters
            incr = float(np.sqrt(np.mean((p_new - p_it)**2))) / p_scale
            p_it = p_new
            iters = it + 1
            if incr < self.cfg.picard_tol:
                break
        else:
            log.warning("Picard iteration hit the cap (%d iters, incr=%.3e)",
                        iters, incr)
        self.max_picard_last_step = max(self.max_picard_last_step, iters)

        self._stage_p = p_it
        self._stage_u = u_it
        alpha, beta = eos_mod.rho_e_affine(self.eosp, rho_l)
        u_at_p = np.matmul(disc.u_at_pnodes[None, :, :], u_it)
        k_nodal = 0.5 * np.sum(u_at_p**2, axis=2)
        rhoE_l = alpha * p_it + beta + self.M**2 * rho_l * k_nodal
        return rho_l, u_it, p_it, rhoE_l

    # -- one full step ----------------------------------------------------------

    def step(self, state: SimState) -> SimState:
        disc, tab, cfg = self.disc, self.tab, self.cfg
        dt = cfg.dt
        if dt == 0.0:
            return state.copy()
        if tab.is_explicit_only:
            return self.explicit_step(state)
        self.max_picard_last_step = 0
        self.linear_iters_last_step = 0
        mom_n, ene_n = self._inner_products(state)
        resids = []
        self._stage_p = state.p.values
        self._stage_u = state.u.values
        for l in range(tab.s):
            rho_l, u_l, p_l, rhoE_l = self.stage_advance(state, mom_n, ene_n, resids, l, dt)
            resids.append(self._residuals(rho_l, u_l, p_l, state.t + tab.c[l] * dt))

        # generic b / bt weighted update of the conserved variables
        rho_new = state.rho.values.copy()
        mom_rhs = mom_n.copy()
        ene_rhs = ene_n.copy()
        for l in range(tab.s):
            if tab.b[l] != 0.0:
                rho_new = rho_new + dt * tab.b[l] * disc.apply_mass_inv(resids[l].r_rho, "p")
                mom_rhs = mom_rhs + dt * tab.b[l] * resids[l].r_conv
                ene_rhs = ene_rhs + dt * tab.b[l] * resids[l].r_k
            if tab.bt[l] != 0.0:
                mom_rhs = mom_rhs + dt * tab.bt[l] * resids[l].r_p
                ene_rhs = ene_rhs + dt * tab.bt[l] * resids[l].r_h
        if np.min(rho_new) <= 0.0:
            raise SolverAbort("negative density after update")
        mom_new = np.stack(
            [disc.apply_mass_inv(mom_rhs[:, :, k], "u") for k in range(disc.dim)], axis=2)
        rhoE_new = disc.apply_mass_inv(ene_rhs, "p")
        rho_at_u = rho_new @ disc.p_at_unodes.T
        if np.min(rho_at_u) <= 0.0:
            raise SolverAbort("negative density at velocity nodes after update")
        u_new = mom_new / rho_at_u[:, :, None]
        p_new = pressure_from_conserved(disc, self.eosp, self.M, rho_new, rhoE_new, u_new)

        out = state.copy()
        out.t = state.t + dt
        out.rho.values = rho_new
        out.u.values = u_new
        out.p.values = p_new
        out.rho_E.values = rhoE_new
        return out

    # -- explicit reference -----------------------------------------------------

    def _explicit_rhs(self, rho, u, p, t):
        st = op.StateEval(self.disc, self.eosp, self.M, rho, u, p, t=t, bcs=self.bcs,
                          full_lambda=True)
        R_rho, R_mom, R_E = op.full_explicit_residuals(self.disc, st)
        return (self.disc.apply_mass_inv(R_rho, "p"),
                np.stack([self.disc.apply_mass_inv(R_mom[:, :, k], "u")
                          for k in range(self.disc.dim)], axis=2),
                self.disc.apply_mass_inv(R_E, "p"))

    def explicit_step(self, state: SimState) -> SimState:
        """Advance the conserved variables with the explicit tableau, full Rusanov."""
        disc, tab, cfg = self.disc, self.tab, self.cfg
        dt = cfg.dt
        rho_at_u = state.rho.values @ disc.p_at_unodes.T
        W = [state.rho.values,
             state.u.values * rho_at_u[:, :, None],
             state.rho_E.values]
        prim = [(state.rho.values, state.u.values, state.p.values)]
        ks = []
        for l in range(tab.s):
            rho_l = W[0].copy()
            mom_l = W[1].copy()
            ene_l = W[2].copy()
            for m in range(l):
                if tab.A[l, m] != 0.0:
                    rho_l = rho_l + dt * tab.A[l, m] * ks[m][0]
                    mom_l = mom_l + dt * tab.A[l, m] * ks[m][1]
                    ene_l = ene_l + dt * tab.A[l, m] * ks[m][2]
            rho_f, u_f, p_f = self._conserved_to_primitive(rho_l, mom_l, ene_l, l)
            ks.append(self._explicit_rhs(rho_f, u_f, p_f, state.t + tab.c[l] * dt))
            prim.append((rho_f, u_f, p_f))
        rho_n = W[0] + dt * sum(tab.b[l] * ks[l][0] for l in range(tab.s))
        mom_n = W[1] + dt * sum(tab.b[l] * ks[l][1] for l in range(tab.s))
        ene_n = W[2] + dt * sum(tab.b[l] * ks[l][2] for l in range(tab.s))
        rho_f, u_f, p_f = self._conserved_to_primitive(rho_n, mom_n, ene_n, None)
        out = state.copy()
        out.t = state.t + dt
        out.rho.values = rho_f
        out.u.values = u_f
        out.p.values = p_f
        alpha, beta = eos_mod.rho_e_affine(self.eosp, rho_f)
        u_at_p = np.matmul(disc.u_at_pnodes[None, :, :], u_f)
        out.rho_E.values = (alpha * p_f + beta
                            + self.M**2 * rho_f * 0.5 * np.sum(u_at_p**2, axis=2))
        return out

    def _conserved_to_primitive(self, rho, mom, ene, stage):
        disc = self.disc
        if np.min(rho) <= 0.0:
            raise SolverAbort(f"negative density in explicit stage {stage}")
        rho_at_u = rho @ disc.p_at_unodes.T
        u = mom / rho_at_u[:, :, None]
        p = pressure_from_conserved(disc, self.eosp, self.M, rho, ene, u)
        return rho, u, p


# ---------------------------------------------------------------------------
# run driver
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    step: int
    time: float
    dt: float
    c_acoustic: float
    c_advective: float
    kinetic_energy: float
    ke_ratio: float
    div_u_l2: float
    grad_rho_l2: float
    picard_iters: int


@dataclass
class RunReport:
    case_name: str
    scheme: str
    M: float
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)   # (time, SimState)
    final_state: SimState | None = None
    aborted: bool = False
    abort_reason: str = ""
    abort_step: int | None = None

    def series(self, key):
        return np.array([getattr(r, key) for r in self.rows])

    @property
    def ke_ratio(self):
        return self.series("ke_ratio")


@dataclass
class Reporting:
    snapshot_times: tuple = ()
    record_every: int = 1


def courant_numbers(disc, eosp, M, state: SimState, dt):
    """Acoustic and advective Courant numbers from the nodal state."""
    c = np.sqrt(eos_mod.sound_speed_sq(eosp, state.rho.values, state.p.values))
    u_mag = np.sqrt(np.sum(state.u.values**2, axis=2))
    H = disc.mesh.min_diameter
    r = disc.basis_p.degree
    sqrt_d = np.sqrt(disc.dim)
    c_ac = float(np.max(c)) / M * r * dt / H * sqrt_d
    c_ad = float(np.max(u_mag)) * r * dt / H * sqrt_d
    return c_ac, c_ad


def _check_finite(state: SimState, limit, step):
    for f in (state.rho, state.u, state.p):
        vals = f.values
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > limit:
            raise SolverAbort("instability detected (non-finite or exploding fields)",
                              step_index=step)


def run(case, tab, cfg: SolverConfig, disc: Discretization | None = None,
        reporting: Reporting | None = None, initial: SimState | None = None) -> RunReport:
    """Advance a benchmark case to its final time, recording diagnostics.

    `case` follows the CaseSpec protocol of apeuler.cases.  On numerical
    failure a SolverAbort is raised; the partially filled report is attached
    to the exception as `report`.
    """
    if isinstance(tab, str):
        tab = tb.builtin(tab)
    reporting = reporting or Reporting()
    if disc is None:
        from .mesh import build_mesh
        mesh, topo = build_mesh(case.dim, case.extents, case.default_n_elems, case.periodic)
        disc = Discretization(mesh, topo, case.default_degree)
    eosp = case.eos
    M = case.M
    solver = ImexSolver(disc, eosp, M, tab, cfg, bcs=case.bcs)
    state = initial.copy() if initial is not None else make_state(
        disc, eosp, M, case.initial_rho, case.initial_u, case.initial_p)

    t_final = cfg.t_final
    n_steps = max(1, int(round(t_final / cfg.dt)))
    report = RunReport(case_name=case.name, scheme=tab.name, M=M)
    ke0 = diag.kinetic_energy(disc, state.rho, state.u)
    ke_ref = ke0 if ke0 > 0.0 else 1.0

    def record(step, picard):
        c_ac, c_ad = courant_numbers(disc, eosp, M, state, cfg.dt)
        ke = diag.kinetic_energy(disc, state.rho, state.u)
        report.rows.append(ReportRow(
            step=step, time=state.t, dt=cfg.dt, c_acoustic=c_ac, c_advective=c_ad,
            kinetic_energy=ke, ke_ratio=ke / ke_ref if ke0 > 0.0 else 1.0,
            div_u_l2=diag.divergence_l2(disc, state.u),
            grad_rho_l2=diag.density_gradient_l2(disc, state.rho),
            picard_iters=picard))

    record(0, 0)
    snap_pending = sorted(reporting.snapshot_times)
    try:
        for step in range(1, n_steps + 1):
            state = solver.step(state)
            _check_finite(state, cfg.instability_max, step)
            if step % reporting.record_every == 0 or step == n_steps:
                record(step, solver.max_picard_last_step)
            while snap_pending and state.t >= snap_pending[0] - 0.5 * cfg.dt:
                report.snapshots.append((state.t, state.copy()))
                snap_pending.pop(0)
    except SolverAbort as exc:
        report.aborted = True
        report.abort_reason = str(exc)
        report.abort_step = exc.step_index if exc.step_index is not None else len(report.rows)
        report.final_state = state
        exc.report = report
        raise
    report.final_state = state
    return report
