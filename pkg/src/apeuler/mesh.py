"""Cartesian meshes, Gauss-Lobatto nodal bases, quadrature, fields and norms.

Elements are axis-aligned, uniform per axis, in 1D or 2D.  Unknowns are
stored nodally per element: a field is an array of shape
(n_elements, n_nodes[, n_components]).  The reference element is [-1, 1]^d
and, the mesh being uniform, a single set of basis/quadrature tables serves
every element, so all kernels reduce to batched matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature and one-dimensional bases
# ---------------------------------------------------------------------------

def gauss_lobatto(r: int):
    """Gauss-Lobatto nodes and weights with r+1 points on [-1, 1].

    Exact for polynomials of degree up to 2(r+1) - 3.
    """
    if r < 1:
        raise MeshError("gauss_lobatto requires degree r >= 1")
    n = r + 1
    if n == 2:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    # interior nodes are the roots of P'_r
    leg = np.polynomial.legendre.Legendre.basis(r)
    interior = leg.deriv().roots()
    nodes = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    pr = leg(nodes)
    weights = 2.0 / (r * (r + 1) * pr**2)
    return nodes, weights


def gauss_legendre(n: int):
    """n-point Gauss-Legendre rule on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def lagrange_eval(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the Lagrange basis on `nodes` at points `x` -> (len(x), len(nodes)).

    Uses the barycentric form; points coinciding with nodes are handled
    exactly.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    w = np.ones(n)
    for j in range(n):
        diff = nodes[j] - np.delete(nodes, j)
        w[j] = 1.0 / np.prod(diff)
    out = np.zeros((len(x), n))
    for i, xi in enumerate(x):
        d = xi - nodes
        hit = np.where(np.abs(d) < 1e-14)[0]
        if hit.size:
            out[i, hit[0]] = 1.0
            continue
        t = w / d
        out[i] = t / np.sum(t)
    return out


def lagrange_deriv(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Derivatives of the Lagrange basis at points `x` -> (len(x), len(nodes))."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    out = np.zeros((len(x), n))
    for j in range(n):
        others = np.delete(np.arange(n), j)
        denom = np.prod(nodes[j] - nodes[others])
        for k in others:
            rest = others[others != k]
            term = np.ones_like(x)
            for m in rest:
                term = term * (x - nodes[m])
            out[:, j] += term / denom
    return out


@dataclass(frozen=True)
class NodalBasis:
    """Tensor-product Lagrange basis on Gauss-Lobatto points of degree r."""

    degree: int
    nodes: np.ndarray = field(compare=False)
    weights: np.ndarray = field(compare=False)

    @classmethod
    def of_degree(cls, r: int) -> "NodalBasis":
        nodes, weights = gauss_lobatto(r)
        return cls(degree=r, nodes=nodes, weights=weights)

    @property
    def n_1d(self) -> int:
        return self.degree + 1

    def n_nodes(self, dim: int) -> int:
        return self.n_1d**dim


# ---------------------------------------------------------------------------
# mesh and face topology
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CartesianMesh:
    """Uniform Cartesian mesh of quadrilaterals (2D) or intervals (1D)."""

    dim: int
    extents: tuple  # ((lo, hi), ...) per axis
    n_elems: tuple  # per axis
    periodic: tuple  # per axis

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise MeshError("only 1D and 2D meshes are supported")
        for ax in range(self.dim):
            lo, hi = self.extents[ax]
            if hi <= lo:
                raise MeshError(f"degenerate extent on axis {ax}")
            if self.n_elems[ax] < 1:
                raise MeshError(f"need at least one element on axis {ax}")

    @property
    def h(self) -> np.ndarray:
        return np.array([(hi - lo) / n for (lo, hi), n in zip(self.extents, self.n_elems)])

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.n_elems))

    @property
    def min_diameter(self) -> float:
        """Smallest element diameter (the diagonal for quadrilaterals)."""
        return float(np.sqrt(np.sum(self.h**2)))

    def element_origins(self) -> np.ndarray:
        """Lower-left corner of each element, shape (n_elements, dim)."""
        axes = [self.extents[ax][0] + self.h[ax] * np.arange(self.n_elems[ax])
                for ax in range(self.dim)]
        if self.dim == 1:
            return axes[0][:, None]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        # element index e = i + nx * j  (x fastest)
        return np.stack([X.T.ravel(), Y.T.ravel()], axis=1)


@dataclass(frozen=True)
class FaceTopology:
    """Interior face pairs and boundary faces, grouped per axis.

    interior[ax] = (elems_L, elems_R): element L owns the high-side face,
    element R the matching low-side face (periodic wrap included).
    boundary[ax] = (elems_lo, elems_hi): elements owning a physical boundary
    face on the low/high end of the axis (empty arrays when periodic).
    """

    interior: tuple
    boundary: tuple

    def n_interior(self) -> int:
        return sum(len(pair[0]) for pair in self.interior)

    def n_boundary(self) -> int:
        return sum(len(b[0]) + len(b[1]) for b in self.boundary)


def build_mesh(dim, extents, n_elems, periodic):
    """Create a mesh and its face topology."""
    if np.isscalar(n_elems):
        n_elems = (int(n_elems),) * dim
    if isinstance(periodic, bool):
        periodic = (periodic,) * dim
    extents = tuple((float(lo), float(hi)) for lo, hi in np.atleast_2d(extents))
    mesh = CartesianMesh(dim=dim, extents=extents, n_elems=tuple(int(n) for n in n_elems),
                         periodic=tuple(bool(p) for p in periodic))
    interior = []
    boundary = []
    if dim == 1:
        nx = mesh.n_elems[0]
        idx = np.arange(nx)
        if mesh.periodic[0]:
            eL = idx
            eR = np.roll(idx, -1)
            interior.append((eL, eR))
            boundary.append((np.array([], int), np.array([], int)))
        else:
            interior.append((idx[:-1], idx[1:]))
            boundary.append((np.array([0]), np.array([nx - 1])))
    else:
        nx, ny = mesh.n_elems
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        eid = (ii + nx * jj)
        # axis 0: faces normal to x
        if mesh.periodic[0]:
            eL = eid.ravel()
            eR = (np.roll(ii, -1, axis=0) + nx * jj).ravel()
            interior.append((eL, eR))
            boundary.append((np.array([], int), np.array([], int)))
        else:
            eL = eid[:-1, :].ravel()
            eR = eid[1:, :].ravel()
            interior.append((eL, eR))
            boundary.append((eid[0, :].ravel(), eid[-1, :].ravel()))
        # axis 1: faces normal to y
        if mesh.periodic[1]:
            eL = eid.ravel()
            eR = (ii + nx * np.roll(jj, -1, axis=1)).ravel()
            interior.append((eL, eR))
            boundary.append((np.array([], int), np.array([], int)))
        else:
            eL = eid[:, :-1].ravel()
            eR = eid[:, 1:].ravel()
            interior.append((eL, eR))
            boundary.append((eid[:, 0].ravel(), eid[:, -1].ravel()))
    return mesh, FaceTopology(interior=tuple(interior), boundary=tuple(boundary))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

class DgField:
    """Nodal DG coefficients of a scalar or vector unknown.

    Scalars are stored as (n_elements, n_nodes); vectors carry a trailing
    component axis even for a single component (1D velocities).
    """

    def __init__(self, mesh: CartesianMesh, basis: NodalBasis, ncomp: int = 1,
                 values: np.ndarray | None = None, vector: bool = False):
        self.mesh = mesh
        self.basis = basis
        self.ncomp = ncomp
        self.vector = vector or ncomp > 1
        n = basis.n_nodes(mesh.dim)
        shape = ((mesh.n_elements, n, ncomp) if self.vector
                 else (mesh.n_elements, n))
        if values is None:
            values = np.zeros(shape)
        values = np.asarray(values, dtype=float)
        if values.shape != shape:
            raise MeshError(f"field values have shape {values.shape}, expected {shape}")
        self.values = values

    def copy(self) -> "DgField":
        return DgField(self.mesh, self.basis, self.ncomp, self.values.copy(),
                       vector=self.vector)

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise MeshError("field contains non-finite entries")


def reference_nodes(basis: NodalBasis, dim: int) -> np.ndarray:
    """Node coordinates on the reference element, shape (n_nodes, dim)."""
    if dim == 1:
        return basis.nodes[:, None]
    X, Y = np.meshgrid(basis.nodes, basis.nodes, indexing="ij")
    # node index n = a + (r+1) * b with a the x-index (x fastest)
    return np.stack([X.T.ravel(), Y.T.ravel()], axis=1)


def node_coords(mesh: CartesianMesh, basis: NodalBasis) -> np.ndarray:
    """Physical coordinates of every nodal point, (n_elements, n_nodes, dim)."""
    ref = reference_nodes(basis, mesh.dim)
    origins = mesh.element_origins()
    h = mesh.h
    return origins[:, None, :] + (ref[None, :, :] + 1.0) * (h[None, None, :] / 2.0)


def _tensor_outer(Mx: np.ndarray, My: np.ndarray) -> np.ndarray:
    """Row-wise tensor product: out[(qx, qy), (ax, ay)] = Mx[qx, ax] My[qy, ay].

    Flattening uses x-fastest ordering for both points and nodes.
    """
    nqx, nax = Mx.shape
    nqy, nay = My.shape
    out = Mx[:, None, :, None] * My[None, :, None, :]   # (qx, qy, ax, ay)
    out = np.transpose(out, (1, 0, 3, 2))               # (qy, qx, ay, ax)
    return out.reshape(nqy * nqx, nay * nax)


def interpolate(fn, mesh: CartesianMesh, basis: NodalBasis, ncomp: int = 1) -> DgField:
    """Collocate a pointwise function at the mapped Gauss-Lobatto nodes."""
    coords = node_coords(mesh, basis)
    flat = coords.reshape(-1, mesh.dim)
    vals = np.asarray(fn(flat), dtype=float)
    if ncomp == 1:
        vals = vals.reshape(mesh.n_elements, basis.n_nodes(mesh.dim))
    else:
        vals = vals.reshape(mesh.n_elements, basis.n_nodes(mesh.dim), ncomp)
    if not np.all(np.isfinite(vals)):
        raise MeshError("interpolation sampled a non-finite value")
    return DgField(mesh, basis, ncomp, vals)


# ---------------------------------------------------------------------------
# precomputed discretization tables
# ---------------------------------------------------------------------------

class Discretization:
    """All reference tables tied to (mesh, topology, degree[, velocity degree]).

    The scalar space (density, pressure, energy) has degree r; the velocity
    space has degree r or r+1 (mixed pairing).  Volume and face quadrature
    use Gauss-Legendre with max(degree)+2 points per direction.
    """

    def __init__(self, mesh: CartesianMesh, topo: FaceTopology, degree: int,
                 velocity_degree: int | None = None):
        if degree < 1:
            raise MeshError("degree must be at least 1")
        self.mesh = mesh
        self.topo = topo
        self.basis_p = NodalBasis.of_degree(degree)
        ru = degree if velocity_degree is None else velocity_degree
        if ru < degree:
            raise MeshError("velocity degree must not be lower than the scalar degree")
        self.basis_u = self.basis_p if ru == degree else NodalBasis.of_degree(ru)
        self.dim = mesh.dim
        nq = max(degree, ru) + 2
        self.nq_1d = nq
        q1, w1 = gauss_legendre(nq)
        self._q1, self._w1 = q1, w1

        h = mesh.h
        self.jac_vol = float(np.prod(h / 2.0))
        self.h = h

        # volume tables: V (nq_vol, n), grad[k] physical derivative tables
        if self.dim == 1:
            wv = w1.copy()
        else:
            wv = np.multiply.outer(w1, w1).T.ravel()  # y-slow, x-fast to match _tensor_outer
        self.w_vol = wv * self.jac_vol

        def make_tables(basis):
            if self.dim == 1:
                V = lagrange_eval(basis.nodes, q1)
                G = [lagrange_deriv(basis.nodes, q1) * (2.0 / h[0])]
            else:
                V1 = lagrange_eval(basis.nodes, q1)
                D1 = lagrange_deriv(basis.nodes, q1)
                V = _tensor_outer(V1, V1)
                G = [_tensor_outer(D1, V1) * (2.0 / h[0]),
                     _tensor_outer(V1, D1) * (2.0 / h[1])]
            return V, G

        self.Vp, self.Gp = make_tables(self.basis_p)
        self.Vu, self.Gu = make_tables(self.basis_u)

        # face tables per axis and side (lo = -1, hi = +1)
        # face quadrature points run along the tangential axis
        def face_tables(basis):
            tabs = []
            for ax in range(self.dim):
                if self.dim == 1:
                    lo = lagrange_eval(basis.nodes, np.array([-1.0]))
                    hi = lagrange_eval(basis.nodes, np.array([1.0]))
                else:
                    end_lo = lagrange_eval(basis.nodes, np.array([-1.0]))[0]
                    end_hi = lagrange_eval(basis.nodes, np.array([1.0]))[0]
                    tang = lagrange_eval(basis.nodes, q1)
                    if ax == 0:
                        lo = _tensor_outer(end_lo[None, :], tang)
                        hi = _tensor_outer(end_hi[None, :], tang)
                    else:
                        lo = _tensor_outer(tang, end_lo[None, :])
                        hi = _tensor_outer(tang, end_hi[None, :])
                tabs.append({"lo": lo, "hi": hi})
            return tabs

        self.Tp = face_tables(self.basis_p)
        self.Tu = face_tables(self.basis_u)
        self.w_face = []
        for ax in range(self.dim):
            if self.dim == 1:
                self.w_face.append(np.array([1.0]))
            else:
                jac = h[1 - ax] / 2.0
                self.w_face.append(w1 * jac)

        # mass matrices (exact at this quadrature) and inverses
        self.mass_p = (self.Vp * self.w_vol[:, None]).T @ self.Vp
        self.mass_u = (self.Vu * self.w_vol[:, None]).T @ self.Vu
        self.mass_p_inv = np.linalg.inv(self.mass_p)
        self.mass_u_inv = np.linalg.inv(self.mass_u)

        # interpolation between the two nodal sets
        ref_u = reference_nodes(self.basis_u, self.dim)
        ref_p = reference_nodes(self.basis_p, self.dim)
        self.p_at_unodes = _eval_tensor_at(self.basis_p, ref_u, self.dim)
        self.u_at_pnodes = _eval_tensor_at(self.basis_u, ref_p, self.dim)

        self.n_p = self.basis_p.n_nodes(self.dim)
        self.n_u = self.basis_u.n_nodes(self.dim)
        self.nodes_p = node_coords(mesh, self.basis_p)
        self.nodes_u = node_coords(mesh, self.basis_u)

    # -- evaluation helpers -------------------------------------------------

    def vol_scalar(self, coeffs: np.ndarray, space: str = "p") -> np.ndarray:
        """Field values at the volume quadrature points, (n_elem, nq_vol)."""
        V = self.Vp if space == "p" else self.Vu
        return coeffs @ V.T

    def vol_vector(self, coeffs: np.ndarray, space: str = "u") -> np.ndarray:
        """(n_elem, nq_vol, d) values of a vector field."""
        V = self.Vu if space == "u" else self.Vp
        return np.matmul(V[None, :, :], coeffs)

    def face_scalar(self, coeffs: np.ndarray, ax: int, side: str, elems: np.ndarray,
                    space: str = "p") -> np.ndarray:
        T = (self.Tp if space == "p" else self.Tu)[ax][side]
        return coeffs[elems] @ T.T

    def face_vector(self, coeffs: np.ndarray, ax: int, side: str, elems: np.ndarray,
                    space: str = "u") -> np.ndarray:
        T = (self.Tu if space == "u" else self.Tp)[ax][side]
        return np.matmul(T[None, :, :], coeffs[elems])

    # -- integrals ----------------------------------------------------------

    def mass_rhs(self, vals_q: np.ndarray, space: str = "p") -> np.ndarray:
        """(∫ v ψ_i)_i for every element, from values at volume quad points."""
        V = self.Vp if space == "p" else self.Vu
        return (vals_q * self.w_vol[None, :]) @ V

    def apply_mass_inv(self, rhs: np.ndarray, space: str = "p") -> np.ndarray:
        Minv = self.mass_p_inv if space == "p" else self.mass_u_inv
        return rhs @ Minv.T

    def integrate(self, vals_q: np.ndarray) -> float:
        """Integral over the domain of values given at volume quad points."""
        return float(np.sum(vals_q @ self.w_vol))


def _eval_tensor_at(basis: NodalBasis, ref_pts: np.ndarray, dim: int) -> np.ndarray:
    """Evaluate the tensor basis at arbitrary reference points, (npts, n_nodes)."""
    if dim == 1:
        return lagrange_eval(basis.nodes, ref_pts[:, 0])
    Vx = lagrange_eval(basis.nodes, ref_pts[:, 0])
    Vy = lagrange_eval(basis.nodes, ref_pts[:, 1])
    n1 = basis.n_1d
    out = np.zeros((len(ref_pts), n1 * n1))
    for b in range(n1):
        for a in range(n1):
            out[:, a + n1 * b] = Vx[:, a] * Vy[:, b]
    return out


# ---------------------------------------------------------------------------
# norms and point evaluation
# ---------------------------------------------------------------------------

def _quad_points_phys(disc: Discretization) -> np.ndarray:
    """Physical coordinates of the volume quadrature points, (e, q, d)."""
    q1 = disc._q1
    if disc.dim == 1:
        ref = q1[:, None]
    else:
        X, Y = np.meshgrid(q1, q1, indexing="ij")
        ref = np.stack([X.T.ravel(), Y.T.ravel()], axis=1)
    origins = disc.mesh.element_origins()
    return origins[:, None, :] + (ref[None, :, :] + 1.0) * (disc.h[None, None, :] / 2.0)


def _space_of(disc: Discretization, field: DgField) -> str:
    if field.basis.degree == disc.basis_p.degree:
        return "p"
    if field.basis.degree == disc.basis_u.degree:
        return "u"
    raise MeshError("field basis matches neither space of the discretization")


def l2_norm(disc: Discretization, field: DgField) -> float:
    """Overintegrated L2 norm of a field."""
    space = _space_of(disc, field)
    if not field.vector:
        vals = disc.vol_scalar(field.values, space)
        return float(np.sqrt(max(disc.integrate(vals**2), 0.0)))
    vals = disc.vol_vector(field.values, space)
    return float(np.sqrt(max(disc.integrate(np.sum(vals**2, axis=2)), 0.0)))


def l2_error(disc: Discretization, field: DgField, exact) -> float:
    """L2 norm of field - exact, `exact` being a pointwise callable."""
    pts = _quad_points_phys(disc)
    flat = pts.reshape(-1, disc.dim)
    space = _space_of(disc, field)
    if not field.vector:
        ref = np.asarray(exact(flat), dtype=float).reshape(pts.shape[:2])
        vals = disc.vol_scalar(field.values, space)
        return float(np.sqrt(max(disc.integrate((vals - ref)**2), 0.0)))
    ref = np.asarray(exact(flat), dtype=float).reshape(pts.shape[0], pts.shape[1], field.ncomp)
    vals = disc.vol_vector(field.values, space)
    return float(np.sqrt(max(disc.integrate(np.sum((vals - ref)**2, axis=2)), 0.0)))


def l2_relative_error(disc: Discretization, field: DgField, exact) -> float:
    """Relative L2 error against a pointwise reference."""
    pts = _quad_points_phys(disc)
    flat = pts.reshape(-1, disc.dim)
    if not field.vector:
        ref = np.asarray(exact(flat), dtype=float).reshape(pts.shape[:2])
        denom = np.sqrt(max(disc.integrate(ref**2), 0.0))
    else:
        ref = np.asarray(exact(flat), dtype=float).reshape(pts.shape[0], pts.shape[1], field.ncomp)
        denom = np.sqrt(max(disc.integrate(np.sum(ref**2, axis=2)), 0.0))
    err = l2_error(disc, field, exact)
    return err / denom if denom > 0.0 else err


def eval_field_at(field: DgField, pts: np.ndarray) -> np.ndarray:
    """Evaluate a DG field at arbitrary physical points (piecewise polynomial).

    Points exactly on element interfaces take the value of the element whose
    interior they fall into after a tiny inward nudge.
    """
    mesh = field.mesh
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    h = mesh.h
    idx = np.zeros((len(pts),), dtype=int)
    ref = np.zeros((len(pts), mesh.dim))
    stride = 1
    for ax in range(mesh.dim):
        lo = mesh.extents[ax][0]
        t = (pts[:, ax] - lo) / h[ax]
        i = np.clip(np.floor(t - 1e-12).astype(int), 0, mesh.n_elems[ax] - 1)
        ref[:, ax] = 2.0 * (t - i) - 1.0
        idx += stride * i
        stride *= mesh.n_elems[ax]
    out_shape = (len(pts), field.ncomp) if field.vector else (len(pts),)
    out = np.zeros(out_shape)
    # group by element for batched evaluation
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.searchsorted(sorted_idx, np.unique(sorted_idx))
    uniq = np.unique(sorted_idx)
    bounds = np.append(starts, len(order))
    for k, e in enumerate(uniq):
        sel = order[bounds[k]:bounds[k + 1]]
        B = _eval_tensor_at(field.basis, ref[sel], mesh.dim)
        out[sel] = B @ field.values[e]
    return out
