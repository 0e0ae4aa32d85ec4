"""Matched-asymptotic construction: coefficients, gluing, residual orders."""

import numpy as np
import pytest

from willmore_pf import expansion as ex
from willmore_pf import geometry as geo
from willmore_pf import profiles as pr
from willmore_pf.errors import ConfigurationError


def circle_hierarchy(R0=1.0, t=0.0, delta=0.8, k_impl=2):
    return ex.DistanceHierarchy(ex.WillmoreCircleFamily(R0), t, delta, k_impl)


def sphere_hierarchy(R=1.0, delta=0.4, k_impl=2):
    return ex.DistanceHierarchy(ex.StationarySphereFamily(R), 0.0, delta, k_impl)


class TestCutoff:
    def test_plateau_and_support(self):
        assert ex.cutoff_zeta(0.0, 0.4) == 1.0
        assert ex.cutoff_zeta(0.19, 0.4) == 1.0
        assert ex.cutoff_zeta(0.5, 0.4) == 0.0
        assert ex.cutoff_zeta(0.41, 0.4) == 0.0

    def test_even(self):
        r = np.linspace(-0.5, 0.5, 101)
        z = ex.cutoff_zeta(r, 0.4)
        assert np.max(np.abs(z - z[::-1])) < 1e-15

    def test_smooth_monotone_shoulder(self):
        r = np.linspace(0.2, 0.4, 200)
        z = ex.cutoff_zeta(r, 0.4)
        assert np.all(np.diff(z) <= 0)
        assert np.all((z >= 0) & (z <= 1))


class TestCoefficients:
    def test_circle_D0(self):
        # Delta d = 1/(R + r); grad(Delta d).grad d = -1/(R+r)^2
        h = circle_hierarchy()
        val = ex.D_coeff(h, 0)
        assert val[0] == pytest.approx(-0.5, abs=1e-14)

    def test_sphere_D0_vanishes(self):
        h = sphere_hierarchy()
        assert ex.D_coeff(h, 0)[0] == pytest.approx(0.0, abs=1e-14)

    def test_D1_zero_with_trivial_d1(self):
        h = circle_hierarchy()
        rho = np.linspace(0.7, 1.3, 11)
        assert np.all(ex.D_coeff(h, 1, rho) == 0.0)

    def test_D_coeff_validation(self):
        with pytest.raises(ValueError):
            ex.D_coeff(circle_hierarchy(), 2)

    def test_G0_vanishes_on_interface_for_willmore_circle(self):
        h = circle_hierarchy(t=0.05)
        c = ex.ExpansionCoefficients(h)
        assert c.G0(np.asarray([c.R]))[0] == pytest.approx(0.0, abs=1e-14)

    def test_G0_identically_zero_for_sphere(self):
        c = ex.ExpansionCoefficients(sphere_hierarchy())
        rho = np.linspace(0.6, 1.4, 21)
        assert np.max(np.abs(c.G0(rho))) < 1e-14


class TestChi0:
    def test_finite_and_smooth_across_interface(self):
        c = ex.ExpansionCoefficients(circle_hierarchy())
        rho = np.linspace(c.R - 0.3, c.R + 0.3, 4001)
        chi = c.chi0(rho)
        assert np.all(np.isfinite(chi))
        # no jump across rho = R
        jumps = np.abs(np.diff(chi))
        assert jumps.max() < 5e-3

    def test_two_branch_consistency(self):
        # quotient branch at the band edge vs the on-interface gradient value
        c = ex.ExpansionCoefficients(circle_hierarchy())
        band = c.blend_width
        t = c.tables
        pref = t.sigma / t.sigma_bar
        for sign in (+1, -1):
            rho_edge = c.R + sign * band
            quot = pref * c.G0(np.asarray([rho_edge]))[0] / (rho_edge - c.R)
            grad = pref * c.dG0_dr(c.R)
            assert abs(quot - grad) < 3 * band * abs(grad) + 1e-12

    def test_gradient_branch_is_lhopital_limit(self):
        c = ex.ExpansionCoefficients(circle_hierarchy(t=0.02))
        t = c.tables
        pref = t.sigma / t.sigma_bar
        eps_list = [1e-3, 1e-4, 1e-5]
        quots = [
            pref * c.G0(np.asarray([c.R + e]))[0] / e for e in eps_list
        ]
        grad = pref * c.dG0_dr(c.R)
        errs = [abs(q - grad) for q in quots]
        assert errs[-1] < errs[0]
        assert errs[-1] < 1e-3 * max(abs(grad), 1.0)

    def test_sphere_chi0_zero(self):
        c = ex.ExpansionCoefficients(sphere_hierarchy())
        rho = np.linspace(0.7, 1.3, 31)
        assert np.max(np.abs(c.chi0(rho))) < 1e-13


class TestMu2:
    def test_sphere_value_zero(self):
        assert ex.mu2_constant(sphere_hierarchy()) == pytest.approx(0.0, abs=1e-13)

    def test_circle_value_from_profile_integrals(self):
        # oracle: assemble the solvability balance directly from quadrature
        h = circle_hierarchy()
        c = ex.ExpansionCoefficients(h)
        t = c.tables
        R = c.R
        dD0 = c.dD0_dr(np.asarray([R]))[0]
        lapD0 = c.lap_d(np.asarray([R]))[0] * c.D0(np.asarray([R]))[0]
        expected = -((dD0 + 0.5 * lapD0) * t.q2 + lapD0 * t.q_gamma1 + dD0 * t.q_gamma2) / t.sigma
        assert ex.mu2_constant(h) == pytest.approx(expected, abs=1e-14)

    def test_resolution_stability(self):
        h = circle_hierarchy()
        a = ex.ExpansionCoefficients(h, tables=pr.profile_tables(20.0, 8001))
        b = ex.ExpansionCoefficients(h, tables=pr.profile_tables(20.0, 16001))
        va = a.mu2(np.asarray([a.R]))[0]
        vb = b.mu2(np.asarray([b.R]))[0]
        assert abs(va - vb) < 1e-8


class TestD1Machinery:
    def test_xi0_vanishes_by_parity(self):
        assert abs(ex.xi0_source(circle_hierarchy())) < 1e-12

    def test_d1_stays_zero(self):
        val = ex.solve_d1_radial(circle_hierarchy(), t_end=0.02, dt=2e-3)
        assert abs(val) < 1e-12


class TestInnerTerms:
    def test_order1_phi_vanishes(self):
        h = circle_hierarchy()
        c = ex.ExpansionCoefficients(h)
        ev = ex.inner_terms(h, c, 1)
        z = np.linspace(-5, 5, 11)
        phi1, _ = ev(z, np.full_like(z, 1.0))
        assert np.all(phi1 == 0.0)

    def test_order0_mu_on_circle(self):
        h = circle_hierarchy()
        c = ex.ExpansionCoefficients(h)
        ev = ex.inner_terms(h, c, 0)
        z = np.linspace(-3, 3, 7)
        _, mu0 = ev(z, np.full_like(z, 1.0))
        assert np.allclose(mu0, -pr.theta_profile(z, 1), atol=1e-14)

    def test_order2_phi_vanishes_at_zero(self):
        h = circle_hierarchy()
        c = ex.ExpansionCoefficients(h)
        ev = ex.inner_terms(h, c, 2)
        phi2, _ = ev(np.asarray([0.0]), np.asarray([1.0]))
        assert abs(phi2[0]) < 1e-12

    def test_order_validation(self):
        h = circle_hierarchy()
        c = ex.ExpansionCoefficients(h)
        with pytest.raises(ValueError):
            ex.inner_terms(h, c, 4)

    def test_matching_decay(self):
        # every correction decays exponentially toward the outer states
        h = circle_hierarchy()
        c = ex.ExpansionCoefficients(h)
        rho = np.asarray([1.05])
        for order in (1, 2):
            ev = ex.inner_terms(h, c, order)
            phi_near, mu_near = ev(np.linspace(-2, 2, 41), np.full(41, rho[0]))
            phi_far, mu_far = ev(np.asarray([10.0]), rho)
            phi_vfar, mu_vfar = ev(np.asarray([19.0]), rho)
            ref = max(np.max(np.abs(phi_near)), np.max(np.abs(mu_near)))
            assert max(abs(phi_far[0]), abs(mu_far[0])) < 1e-3 * ref
            assert max(abs(phi_vfar[0]), abs(mu_vfar[0])) < 1e-8 * ref


class TestBuildApproximate:
    def test_far_field_exact(self):
        h = circle_hierarchy(delta=0.8)
        c = ex.ExpansionCoefficients(h)
        dom = geo.GridDomain(4.0, 256)
        approx = ex.build_approximate(h, c, 0.0625, dom)
        rho = np.sqrt(dom.X**2 + dom.Y**2)
        outside = rho - 1.0 > 2 * 0.8
        inside = rho - 1.0 < -0.81
        assert np.all(approx.phi_a[outside] == 1.0)
        assert np.all(approx.phi_a[inside] == -1.0)
        assert np.all(approx.mu_a[np.abs(rho - 1.0) > 0.8] == 0.0)

    def test_zero_level_near_interface(self):
        h = circle_hierarchy(delta=0.8)
        c = ex.ExpansionCoefficients(h)
        dom = geo.GridDomain(4.0, 512)
        approx = ex.build_approximate(h, c, 0.05, dom)
        curve, _ = geo.extract_zero_level(approx.phi_a, dom)
        radii = np.linalg.norm(curve.nodes, axis=1)
        assert np.max(np.abs(radii - 1.0)) < 5e-4

    def test_mu_on_interface_value(self):
        # mu_a ~ -theta'(0) Delta d = -1/sqrt2 at r=0 on the unit circle
        h = circle_hierarchy(delta=0.8)
        c = ex.ExpansionCoefficients(h)
        dom = geo.GridDomain(4.0, 512)
        eps = 0.05
        approx = ex.build_approximate(h, c, eps, dom)
        i = np.argmin(np.abs(dom.axis - 1.0))
        j = np.argmin(np.abs(dom.axis))
        val = approx.mu_a[i, j]
        lead = -pr.theta_profile((dom.axis[i] - 1.0) / eps, 1)
        assert abs(val - lead) < 0.15 * eps + 0.05  # O(eps) band

    def test_scale_separation_guard(self):
        h = circle_hierarchy(delta=0.3)
        c = ex.ExpansionCoefficients(h)
        dom = geo.GridDomain(4.0, 512)
        with pytest.raises(ConfigurationError):
            ex.build_approximate(h, c, 0.05, dom)  # eps > delta/8

    def test_grid_resolution_guard(self):
        h = circle_hierarchy(delta=0.8)
        c = ex.ExpansionCoefficients(h)
        dom = geo.GridDomain(4.0, 128)  # h = 0.03 > eps/4
        with pytest.raises(ConfigurationError):
            ex.build_approximate(h, c, 0.05, dom)

    def test_gluing_leaves_inner_untouched(self):
        h = circle_hierarchy(delta=0.8)
        c = ex.ExpansionCoefficients(h)
        dom = geo.GridDomain(4.0, 256)
        eps = 0.1
        approx = ex.build_approximate(h, c, eps, dom)
        rho = np.sqrt(dom.X**2 + dom.Y**2)
        r = rho - 1.0
        core = np.abs(r) <= 0.39
        z = r[core] / eps
        phi_inner = pr.theta_profile(z, 0) + eps**2 * c.D0(rho[core]) * pr.theta_profile(z, 1) * c.tables.alpha.spline()(z)
        assert np.max(np.abs(approx.phi_a[core] - phi_inner)) < 1e-12

    def test_radial_matches_grid_build(self):
        h = circle_hierarchy(delta=0.8)
        c = ex.ExpansionCoefficients(h)
        dom = geo.GridDomain(4.0, 256)
        eps = 0.1
        approx = ex.build_approximate(h, c, eps, dom)
        i = np.argmin(np.abs(dom.axis))
        rho_line = np.abs(dom.axis)
        phi_line, mu_line = ex.build_approximate_radial(h, c, eps, rho_line)
        assert np.allclose(approx.phi_a[:, i], phi_line, atol=1e-12)
        assert np.allclose(approx.mu_a[:, i], mu_line, atol=1e-12)


class TestEikonalDefect:
    def test_truncated_distance_is_exact_for_radial(self):
        # with d1 = 0 (and radial normal extension of any d1) the truncated
        # distance IS the radial distance, whose gradient x/|x| has unit norm
        # identically; the defect must vanish to roundoff
        dom = geo.GridDomain(4.0, 256)
        rho = np.maximum(np.sqrt(dom.X**2 + dom.Y**2), 1e-12)
        gx = dom.X / rho
        gy = dom.Y / rho
        ring = np.abs(rho - 1.0) < 0.4
        defect = np.sqrt(gx**2 + gy**2) - 1.0
        assert np.max(np.abs(defect[ring])) <= 1e-12


class TestResidual:
    def test_flat_interface_r2_zero(self):
        # 1D double stripe: phi = theta((x+1)/eps) - theta((x-1)/eps) - 1
        dom = geo.GridDomain(4.0, 256)
        eps = 0.0625
        phi = (
            pr.theta_profile((dom.X + 1.0) / eps, 0)
            - pr.theta_profile((dom.X - 1.0) / eps, 0)
            - 1.0
        )
        mu = np.zeros_like(phi)
        r2 = eps * mu + eps**2 * dom.laplacian(phi) - pr.double_well(phi, 1)
        assert np.max(np.abs(r2)) < 1e-7  # layer-interaction tail only

    def test_constant_state_residuals_zero(self):
        h = circle_hierarchy(delta=0.8)
        dom = geo.GridDomain(4.0, 256)
        eps = 0.1
        phi = np.ones((256, 256))
        mu = np.zeros_like(phi)
        r1 = -(eps**2) * dom.laplacian(mu) + pr.double_well(phi, 2) * mu
        r2 = eps * mu + eps**2 * dom.laplacian(phi) - pr.double_well(phi, 1)
        assert np.max(np.abs(r1)) == 0.0
        assert np.max(np.abs(r2)) == 0.0

    def test_r2_order_in_eps(self):
        # raw r2 of the order-2 build scales at least like eps^2 per halving
        sups = []
        for eps, n in ((0.1, 256), (0.05, 512)):
            h = circle_hierarchy(delta=0.8)
            c = ex.ExpansionCoefficients(h)
            dom = geo.GridDomain(4.0, n)
            approx = ex.build_approximate(h, c, eps, dom)
            rep = ex.residual(approx, h, dt_probe=1e-6)
            sups.append(rep.r2_sup)
        ratio = sups[0] / sups[1]
        assert ratio >= 4.0 * 0.75  # 2^2 within 25 percent

    def test_r1_and_r2_third_order(self):
        sups1, sups2 = [], []
        for eps, n in ((0.1, 256), (0.05, 512)):
            h = circle_hierarchy(delta=0.8)
            c = ex.ExpansionCoefficients(h)
            dom = geo.GridDomain(4.0, n)
            approx = ex.build_approximate(h, c, eps, dom)
            rep = ex.residual(approx, h, dt_probe=1e-6)
            sups1.append(rep.r1_sup)
            sups2.append(rep.r2_sup)
        assert sups2[0] / sups2[1] > 6.0  # ~ eps^3
        assert sups1[0] / sups1[1] > 6.0

    def test_k3_improves_r2(self):
        eps, n = 0.05, 512
        sups = {}
        for k in (2, 3):
            h = circle_hierarchy(delta=0.8, k_impl=k)
            c = ex.ExpansionCoefficients(h)
            dom = geo.GridDomain(4.0, n)
            approx = ex.build_approximate(h, c, eps, dom)
            rep = ex.residual(approx, h, dt_probe=1e-6)
            sups[k] = rep.r2_sup
        assert sups[3] < 0.25 * sups[2]
