"""Meshes, bases, quadrature, interpolation and norms."""

import numpy as np
import pytest

from apeuler import mesh as m


class TestGaussLobatto:
    def test_r1(self):
        nodes, weights = m.gauss_lobatto(1)
        assert np.allclose(nodes, [-1.0, 1.0])
        assert np.allclose(weights, [1.0, 1.0])

    def test_r2(self):
        nodes, weights = m.gauss_lobatto(2)
        assert np.allclose(nodes, [-1.0, 0.0, 1.0])
        assert np.allclose(weights, [1 / 3, 4 / 3, 1 / 3])

    def test_r3(self):
        nodes, weights = m.gauss_lobatto(3)
        assert np.allclose(nodes, [-1.0, -1 / np.sqrt(5), 1 / np.sqrt(5), 1.0])
        assert np.allclose(weights, [1 / 6, 5 / 6, 5 / 6, 1 / 6])

    @pytest.mark.parametrize("r", [1, 2, 3, 4, 5])
    def test_exactness(self, r):
        # exact for polynomials up to degree 2(r+1) - 3
        nodes, weights = m.gauss_lobatto(r)
        rng = np.random.default_rng(r)
        for _ in range(20):
            deg = 2 * (r + 1) - 3
            coeffs = rng.uniform(-1.0, 1.0, deg + 1)
            vals = np.polynomial.polynomial.polyval(nodes, coeffs)
            exact = sum(c * (2.0 / (k + 1)) for k, c in enumerate(coeffs) if k % 2 == 0)
            assert abs(np.dot(weights, vals) - exact) < 1e-12 * max(1.0, abs(exact))

    def test_rejects_r0(self):
        with pytest.raises(m.MeshError):
            m.gauss_lobatto(0)

    def test_symmetry_and_sum(self):
        for r in range(1, 7):
            nodes, weights = m.gauss_lobatto(r)
            assert np.allclose(nodes, -nodes[::-1])
            assert np.all(weights > 0)
            assert abs(weights.sum() - 2.0) < 1e-13


class TestTopology:
    def test_1d_periodic_counts(self):
        mesh, topo = m.build_mesh(1, [(-22.0, 22.0)], 55, True)
        assert mesh.n_elements == 55
        assert len(topo.interior[0][0]) == 55
        assert topo.n_boundary() == 0

    def test_2d_periodic_counts(self):
        mesh, topo = m.build_mesh(2, [(0, 1), (0, 1)], (2, 2), True)
        assert mesh.n_elements == 4
        assert topo.n_interior() == 8

    def test_single_element_bounded(self):
        mesh, topo = m.build_mesh(1, [(0, 1)], 1, False)
        assert topo.n_interior() == 0
        assert topo.n_boundary() == 2

    def test_periodic_wrap_is_involution(self):
        mesh, topo = m.build_mesh(2, [(0, 1), (0, 1)], (4, 3), True)
        for ax in range(2):
            eL, eR = topo.interior[ax]
            fwd = dict(zip(eL, eR))
            bwd = dict(zip(eR, eL))
            for e in eL:
                assert bwd[fwd[e]] == e

    def test_invalid_inputs(self):
        with pytest.raises(m.MeshError):
            m.build_mesh(1, [(0, 1)], 0, True)
        with pytest.raises(m.MeshError):
            m.build_mesh(1, [(1, 1)], 4, True)

    def test_min_diameter_is_diagonal(self):
        mesh, _ = m.build_mesh(2, [(0, 1), (0, 2)], (4, 4), True)
        assert mesh.min_diameter == pytest.approx(np.hypot(0.25, 0.5))


class TestInterpolation:
    def setup_method(self):
        self.mesh, self.topo = m.build_mesh(2, [(0, 1), (0, 1)], (3, 3), True)
        self.disc = m.Discretization(self.mesh, self.topo, 2)

    def test_constant(self):
        f = m.interpolate(lambda x: np.ones(len(x)), self.mesh, self.disc.basis_p)
        assert np.allclose(f.values, 1.0)

    def test_polynomial_reproduction(self):
        def poly(x):
            return 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 0] * x[:, 1] + x[:, 1]**2
        f = m.interpolate(poly, self.mesh, self.disc.basis_p)
        assert m.l2_error(self.disc, f, poly) < 1e-12

    def test_sine_convergence_order(self):
        errs = []
        for n in (8, 16):
            mesh, topo = m.build_mesh(1, [(0.0, 1.0)], n, True)
            disc = m.Discretization(mesh, topo, 2)
            fn = lambda x: np.sin(2 * np.pi * x[:, 0])
            f = m.interpolate(fn, mesh, disc.basis_p)
            errs.append(m.l2_error(disc, f, fn))
        rate = np.log2(errs[0] / errs[1])
        assert rate > 2.7   # r + 1 = 3

    def test_non_finite_rejected(self):
        with pytest.raises(m.MeshError):
            m.interpolate(lambda x: 1.0 / (x[:, 0] - x[:, 0]), self.mesh, self.disc.basis_p)


class TestNorms:
    def setup_method(self):
        self.mesh, self.topo = m.build_mesh(2, [(0, 1), (0, 1)], (3, 3), True)
        self.disc = m.Discretization(self.mesh, self.topo, 2)

    def test_zero_field(self):
        f = m.DgField(self.mesh, self.disc.basis_p)
        assert m.l2_norm(self.disc, f) == 0.0

    def test_constant_on_unit_square(self):
        f = m.interpolate(lambda x: np.full(len(x), 3.0), self.mesh, self.disc.basis_p)
        assert m.l2_norm(self.disc, f) == pytest.approx(3.0, rel=1e-13)

    def test_relative_error(self):
        fn = lambda x: 1.0 + x[:, 0]
        f = m.interpolate(fn, self.mesh, self.disc.basis_p)
        f.values += 0.01
        # ||0.01|| / ||1 + x||
        expected = 0.01 / np.sqrt(7.0 / 3.0)
        assert m.l2_relative_error(self.disc, f, fn) == pytest.approx(expected, rel=1e-10)

    def test_quadrature_exactness(self):
        # volume rule must integrate polynomials of degree 2(r+2)-1 exactly
        rng = np.random.default_rng(2)
        nq = self.disc.nq_1d
        coeffs = rng.uniform(-1, 1, 2 * nq - 1)
        vals = np.polynomial.polynomial.polyval(
            m._quad_points_phys(self.disc)[:, :, 0], coeffs)
        exact = sum(c / (k + 1) for k, c in enumerate(coeffs))   # integral over [0,1]
        assert abs(self.disc.integrate(vals) - exact) < 1e-12 * max(1.0, abs(exact))


class TestFieldEvaluation:
    def test_eval_matches_interpolant(self):
        mesh, topo = m.build_mesh(2, [(0, 1), (0, 1)], (4, 4), True)
        disc = m.Discretization(mesh, topo, 2)
        fn = lambda x: x[:, 0]**2 + 2 * x[:, 1]
        f = m.interpolate(fn, mesh, disc.basis_p)
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.01, 0.99, (50, 2))
        assert np.allclose(m.eval_field_at(f, pts), fn(pts), atol=1e-12)

    def test_eval_vector_field(self):
        mesh, topo = m.build_mesh(1, [(0, 2)], 5, True)
        disc = m.Discretization(mesh, topo, 2)
        vals = np.stack([disc.nodes_u[:, :, 0], disc.nodes_u[:, :, 0]**2], axis=2)
        f = m.DgField(mesh, disc.basis_u, 2, vals)
        pts = np.array([[0.3], [1.7]])
        out = m.eval_field_at(f, pts)
        assert np.allclose(out[:, 0], pts[:, 0], atol=1e-13)
        assert np.allclose(out[:, 1], pts[:, 0]**2, atol=1e-13)


class TestMixedDegree:
    def test_velocity_space_raised(self):
        mesh, topo = m.build_mesh(2, [(0, 1), (0, 1)], (2, 2), True)
        disc = m.Discretization(mesh, topo, 2, velocity_degree=3)
        assert disc.basis_u.degree == 3
        assert disc.n_u == 16 and disc.n_p == 9
        # interpolation matrices reproduce polynomials across spaces
        rho = disc.nodes_p[:, :, 0] + 0.5 * disc.nodes_p[:, :, 1]
        at_u = rho @ disc.p_at_unodes.T
        expected = disc.nodes_u[:, :, 0] + 0.5 * disc.nodes_u[:, :, 1]
        assert np.allclose(at_u, expected, atol=1e-12)

    def test_lower_velocity_degree_rejected(self):
        mesh, topo = m.build_mesh(1, [(0, 1)], 2, True)
        with pytest.raises(m.MeshError):
            m.Discretization(mesh, topo, 2, velocity_degree=1)
