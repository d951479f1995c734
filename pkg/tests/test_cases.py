"""Benchmark case definitions: initial data, boundary data, references."""

import math

import numpy as np
import pytest

from apeuler import cases, eos
from apeuler import mesh as m


def pts(*coords):
    return np.atleast_2d(np.asarray(coords, dtype=float))


class TestIsentropicVortex:
    def test_center_velocity_vanishes(self):
        case = cases.isentropic_vortex(1e-2)
        u = case.initial_u(pts([0.0, 0.0]))
        assert np.allclose(u, 0.0)

    def test_far_field(self):
        case = cases.isentropic_vortex(1e-2)
        far = pts([9.5, 9.5])
        assert case.initial_rho(far)[0] == pytest.approx(1.0, abs=1e-10)
        assert case.initial_p(far)[0] == pytest.approx(1e-4, rel=1e-8)

    def test_speed_at_unit_radius(self):
        M = 1e-2
        case = cases.isentropic_vortex(M)
        u = case.initial_u(pts([1.0, 0.0]))
        assert np.linalg.norm(u) == pytest.approx(M * 5.0 / (2 * math.pi), rel=1e-12)

    def test_steady_reference_equals_initial(self):
        case = cases.isentropic_vortex(1e-3)
        x = np.random.default_rng(0).uniform(-9, 9, (30, 2))
        assert np.allclose(case.reference["rho"](x), case.initial_rho(x))

    def test_pressure_density_relation(self):
        case = cases.isentropic_vortex(1e-2)
        x = np.random.default_rng(1).uniform(-5, 5, (40, 2))
        assert np.allclose(case.initial_p(x), 1e-4 * case.initial_rho(x)**1.4, rtol=1e-12)


class TestCollidingPulses:
    def test_node_of_the_cosine(self):
        case = cases.colliding_pulses()
        at0 = pts([0.0])
        assert case.initial_rho(at0)[0] == pytest.approx(0.955)
        assert case.initial_p(at0)[0] == pytest.approx(1.0)
        assert case.initial_u(at0)[0, 0] == 0.0

    def test_full_amplitude_at_half_domain(self):
        M = 1.0 / 11.0
        case = cases.colliding_pulses(M)
        L = 2.0 / M
        x = pts([L / 2])
        assert case.initial_rho(x)[0] == pytest.approx(0.955 + M * 2.0, rel=1e-12)
        assert case.initial_p(x)[0] == pytest.approx(1.0 + M * 2.8, rel=1e-12)
        assert abs(case.initial_u(x)[0, 0]) == pytest.approx(2 * math.sqrt(1.4), rel=1e-12)

    def test_sg_variant_keeps_ideal_amplitudes(self):
        sg = eos.StiffenedGas(4.4, 6.8e-3, 0.0)
        case = cases.colliding_pulses(eosp=sg)
        assert case.eos is sg
        x = pts([case.extents[0][1] / 2])
        assert abs(case.initial_u(x)[0, 0]) == pytest.approx(2 * math.sqrt(1.4), rel=1e-12)
        assert case.initial_p(x)[0] == pytest.approx(1.0 + (1 / 11) * 2.8, rel=1e-12)


class TestDensityLayering:
    def test_window_support(self):
        L = 50.0
        assert cases.layering_window(np.array([-1.0]), L)[0] == 0.0
        assert cases.layering_window(np.array([0.4 * L + 1.0]), L)[0] == 0.0

    def test_window_peak(self):
        L = 50.0
        assert cases.layering_window(np.array([L / 5.0]), L)[0] == pytest.approx(1.0)

    def test_limit_mean_velocity(self):
        u_mean = cases.layering_limit_mean_velocity()
        u_half = math.sqrt(1.4)
        assert u_mean == pytest.approx(u_half, rel=1e-4)
        corr = u_half - u_mean
        # correction term from the exact integral, evaluated independently
        expected = ((164375.0 - 32875.0 * math.sqrt(5.0)) / (1320441408.0 * math.pi)
                    * (0.5 * 2.0 * math.sqrt(1.4)))
        assert corr == pytest.approx(expected, rel=1e-12)
        assert corr == pytest.approx(2.6e-5, rel=0.05)

    def test_case_shape(self):
        case = cases.density_layering(1e-4)
        assert case.extents == ((-50.0, 50.0),)
        assert case.t_final == pytest.approx(5.071)


class TestOpenTube:
    def test_bcs_match_initial_state_at_t0(self):
        case = cases.open_tube("ideal")
        lo = case.bcs[(0, "lo")]
        hi = case.bcs[(0, "hi")]
        assert lo.rho(0.0) == pytest.approx(1.0)
        assert lo.u(0.0)[0] == pytest.approx(1.0)
        assert hi.p(0.0) == pytest.approx(1.0)

    def test_bcs_continuous_in_time(self):
        case = cases.open_tube("stiffened")
        lo = case.bcs[(0, "lo")]
        ts = np.linspace(0.0, 7.47, 200)
        vals = np.array([lo.rho(t) for t in ts])
        assert np.max(np.abs(np.diff(vals))) < 0.05

    def test_limit_velocity_slope_ideal(self):
        # t = 2 pi / 3: sin(3t) = 0, cos(3t) = 1 -> slope -0.75/1.4
        t = 2 * math.pi / 3
        u = cases.open_tube_limit_velocity(eos.IdealGas(1.4), t, np.array([0.0, 1.0]))
        slope = u[1] - u[0]
        assert slope == pytest.approx(-0.75 / 1.4, rel=1e-12)

    def test_limit_velocity_slope_sg_is_tiny(self):
        sg = eos.StiffenedGas(4.4, 6.8e3, 0.0)
        ts = np.linspace(0.0, 7.47, 50)
        slopes = [abs(cases.open_tube_limit_velocity(sg, t, np.array([0.0, 1.0]))[1]
                      - cases.open_tube_limit_velocity(sg, t, np.array([0.0]))[0])
                  for t in ts]
        assert max(slopes) <= 0.75 / (4.4 * 6.8e3) * 1.05

    def test_limit_density_tracer(self):
        xs, rho, u = cases.open_tube_limit(eos.IdealGas(1.4), 1.0,
                                           n_paths=21, n_steps=2000)
        assert rho.shape == (21,)
        assert np.all(np.isfinite(rho)) and np.all(rho > 0.2)
        # the velocity column is the closed form
        expect = cases.open_tube_limit_velocity(eos.IdealGas(1.4), 1.0, xs)
        assert np.allclose(u, expect, atol=1e-12)

    def test_unsupported_variant(self):
        with pytest.raises(cases.CaseError):
            cases.open_tube("nope")
        with pytest.raises(cases.CaseError):
            cases.open_tube_limit(eos.peng_robinson(1.4, 1.0, 0.15), 1.0)


class TestGresho:
    def test_uphi_peak(self):
        assert cases._gresho_uphi(np.array([0.2]))[0] == pytest.approx(1.0)

    def test_outer_region(self):
        case = cases.gresho(1e-3)
        far = pts([0.95, 0.5])   # r = 0.45 > 0.4
        u = case.initial_u(far)
        assert np.allclose(u, 0.0)
        p0 = 1.0 / 1.4
        expected = p0 + 1e-6 * (4 * math.log(2.0) - 2.0)
        assert case.initial_p(far)[0] == pytest.approx(expected, rel=1e-12)

    def test_pressure_continuity_at_seams(self):
        for r in (0.2, 0.4):
            below = cases._gresho_pressure_shape(np.array([r - 1e-13]))[0]
            above = cases._gresho_pressure_shape(np.array([r + 1e-13]))[0]
            assert below == pytest.approx(above, abs=1e-11)

    def test_sg_background_pressure(self):
        M = 1e-4
        case = cases.gresho(M, "stiffened")
        pi_inf = 6.8e8 * M**2 / 1000.0
        assert case.eos.pi_inf == pytest.approx(pi_inf, rel=1e-12)
        # sound speed at the background state is 1 by construction
        c2 = eos.sound_speed_sq(case.eos, 1.0, 1.0 / 4.4 - pi_inf)
        assert c2 == pytest.approx(1.0, rel=1e-12)

    def test_cubic_background_sound_speed(self):
        M = 1e-4
        case = cases.gresho(M, "cubic")
        p0 = case.initial_p(pts([0.01, 0.01]))[0]   # far corner: r > 0.4
        p0 = p0 - M**2 * 1.0 * (4 * math.log(2.0) - 2.0)
        c2 = eos.sound_speed_sq(case.eos, 1.0, p0)
        assert c2 == pytest.approx(1.0, rel=1e-10)


class TestBaroclinic:
    def test_profile_continuity(self):
        L = 20.0
        eps = 1e-2
        for y0 in (L / 5 - eps, L / 5 + eps):
            below = cases.baroclinic_profile(np.array([y0 - 1e-12]), L)[0]
            above = cases.baroclinic_profile(np.array([y0 + 1e-12]), L)[0]
            assert below == pytest.approx(above, abs=1e-9)

    def test_vertical_velocity_zero(self):
        case = cases.baroclinic()
        x = np.random.default_rng(0).uniform(-19, 19, (20, 2))
        x[:, 1] = np.abs(x[:, 1]) % 8.0
        assert np.allclose(case.initial_u(x)[:, 1], 0.0)

    def test_wave_vanishes_at_ends(self):
        case = cases.baroclinic()
        L = case.extents[0][1]
        end = pts([L, 1.0])
        assert case.initial_u(end)[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert case.initial_p(end)[0] == pytest.approx(1.0, rel=1e-12)


class TestAdmissibilityAndRegistry:
    @pytest.mark.parametrize("name", cases.case_names())
    def test_initial_state_admissible_on_default_mesh(self, name):
        case = cases.get_case(name)
        mesh, _ = m.build_mesh(case.dim, case.extents, case.default_n_elems, case.periodic)
        basis = m.NodalBasis.of_degree(case.default_degree)
        nodes = m.node_coords(mesh, basis).reshape(-1, case.dim)
        assert case.validate_initial_state(nodes)

    def test_periodic_cases_have_no_bcs(self):
        for name in cases.case_names():
            case = cases.get_case(name)
            if all(case.periodic):
                assert case.bcs == {}

    def test_unknown_case(self):
        with pytest.raises(cases.CaseError):
            cases.get_case("nonexistent")
