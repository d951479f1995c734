"""CSV writers for run outputs.

Numeric formatting is full-precision scientific (17 significant digits) and
every file carries a header row; field snapshots additionally record the
actual snapshot time in a leading comment line.
"""

from __future__ import annotations

import numpy as np

from . import diagnostics as diag
from .mesh import Discretization

FMT = "%.16e"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FMT % float(x)


def write_timeseries_csv(path, report):
    cols = ["step", "time", "dt", "C_acoustic", "C_advective", "kinetic_energy",
            "ke_ratio", "div_u_l2", "grad_rho_l2", "picard_iters"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for r in report.rows:
            f.write(",".join([str(r.step), _fmt(r.time), _fmt(r.dt), _fmt(r.c_acoustic),
                              _fmt(r.c_advective), _fmt(r.kinetic_energy), _fmt(r.ke_ratio),
                              _fmt(r.div_u_l2), _fmt(r.grad_rho_l2),
                              str(r.picard_iters)]) + "\n")


def write_field_csv(path, disc: Discretization, state, M, eosp):
    """Field snapshot: x[,y],rho,u[,v],p,mach_local per scalar-space node."""
    mach = diag.local_mach(disc, state.rho, state.u, state.p, M, eosp)
    u_at_p = np.matmul(disc.u_at_pnodes[None, :, :], state.u.values)
    coords = disc.nodes_p
    dim = disc.dim
    cols = (["x", "y"][:dim]) + ["rho"] + (["u", "v"][:dim]) + ["p", "mach_local"]
    with open(path, "w") as f:
        f.write(f"# t = {_fmt(state.t)}\n")
        f.write(",".join(cols) + "\n")
        for e in range(disc.mesh.n_elements):
            for n in range(disc.n_p):
                row = [_fmt(coords[e, n, k]) for k in range(dim)]
                row.append(_fmt(state.rho.values[e, n]))
                row.extend(_fmt(u_at_p[e, n, k]) for k in range(dim))
                row.append(_fmt(state.p.values[e, n]))
                row.append(_fmt(mach.values[e, n]))
                f.write(",".join(row) + "\n")


def write_convergence_csv(path, n_els, errors):
    """errors: dict with keys 'u', 'rho', 'p' of equal-length sequences."""
    table = diag.convergence_rates(
        {k: errors[k] for k in ("u", "rho", "p")}, factor=2.0, n_elems=n_els)
    with open(path, "w") as f:
        f.write("N_el,err_u,rate_u,err_rho,rate_rho,err_p,rate_p\n")
        for i, n in enumerate(n_els):
            row = [str(int(n))]
            for k in ("u", "rho", "p"):
                row.append(_fmt(table.norms[k][i]))
                rate = table.rates[k][i]
                row.append("" if np.isnan(rate) else _fmt(rate))
            f.write(",".join(row) + "\n")


def write_scaling_csv(path, machs, div_u, grad_rho):
    table = diag.mach_scaling(machs, {"div_u": div_u, "grad_rho": grad_rho})
    with open(path, "w") as f:
        f.write("M,div_u,rate_div_u,grad_rho,rate_grad_rho\n")
        for i, mm in enumerate(machs):
            row = [_fmt(mm), _fmt(table.norms["div_u"][i])]
            r1 = table.rates["div_u"][i]
            row.append("" if np.isnan(r1) else _fmt(r1))
            row.append(_fmt(table.norms["grad_rho"][i]))
            r2 = table.rates["grad_rho"][i]
            row.append("" if np.isnan(r2) else _fmt(r2))
            f.write(",".join(row) + "\n")


def read_csv(path):
    """Read one of our CSVs into a dict of numpy arrays (skips # comments)."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    meta = {}
    while lines and lines[0].startswith("#"):
        txt = lines.pop(0)[1:].strip()
        if "=" in txt:
            k, v = txt.split("=", 1)
            meta[k.strip()] = float(v)
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    out = {}
    for j, name in enumerate(header):
        col = [r[j] if j < len(r) else "" for r in rows]
        vals = np.array([float(c) if c != "" else np.nan for c in col])
        out[name] = vals
    out["_meta"] = meta
    return out
