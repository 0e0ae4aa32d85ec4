"""Matched-asymptotic approximate solutions of the phase-field system.

The inner expansion in the stretched variable z = r/eps is built from the
layer profiles:

    phi_0 = theta(z)                 mu_0 = -lap(d) theta'
    phi_1 = 0                        mu_1 = -lap(d1) theta' + D0 z theta'
    phi_2 = D0 theta' alpha          mu_2 = lap(d) D0 theta' g1
                                           + (grad d . grad D0) theta' g2
                                           + D1 z theta' + mu2 theta'
                                           + chi0 d theta' g3

with D_i the quadratic distance-derivative combinations, chi0 the
off-interface extension forced by the solvability of the mu-hierarchy, and
mu2 fixed by the next solvability condition with the second distance
correction truncated to zero.  The inner and outer states (+-1, 0) are glued
with a smooth cutoff in the signed distance, leaving the fields exactly
(+-1, 0) outside the tube.

Implemented truncations: k_impl = 2 everywhere, k_impl = 3 (the cubic layer
correction of phi) for radially symmetric interfaces.
Coefficient fields are closed-form for circles and spheres; those are the
only interfaces the expansion supports.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from . import profiles as pr
from .errors import ConfigurationError
from .geometry import GridDomain, RadialSurface, ClosedCurve, TubularChart, build_chart
from .sharp import circle_exact


# ----------------------------------------------------------------------
# smooth cutoff
# ----------------------------------------------------------------------

def _smooth_step(u):
    """C-infinity step: 0 for u<=0, 1 for u>=1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ga = np.where(u > 0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
        gb = np.where(1 - u > 0, np.exp(-1.0 / np.maximum(1 - u, 1e-300)), 0.0)
    return ga / (ga + gb)


def cutoff_zeta(r, delta):
    """Even C-infinity cutoff: 1 on [-delta/2, delta/2], 0 outside (-delta, delta)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    u = (np.abs(np.asarray(r, dtype=float)) - 0.5 * delta) / (0.5 * delta)
    out = 1.0 - _smooth_step(u)
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# interface families (time-parametrized radial interfaces)
# ----------------------------------------------------------------------

class WillmoreCircleFamily:
    """Circle evolving by the exact law R(t) = (R0^4 + 2t)^(1/4)."""

    dim = 2

    def __init__(self, R0, center=(0.0, 0.0), n_nodes=256):
        self.R0 = float(R0)
        self.center = np.asarray(center, dtype=float)
        self.n_nodes = n_nodes

    def radius(self, t):
        return circle_exact(self.R0, t)

    def radius_dot(self, t):
        return 0.5 / self.radius(t) ** 3

    def chart_at(self, t, delta):
        return build_chart(
            ClosedCurve.circle(self.radius(t), self.n_nodes, center=self.center),
            delta,
        )


class StationarySphereFamily:
    """Sphere: a Willmore equilibrium, so the radius is constant."""

    dim = 3

    def __init__(self, R, center=(0.0, 0.0, 0.0)):
        self.R0 = float(R)
        self.center = np.asarray(center, dtype=float)

    def radius(self, t):
        return self.R0

    def radius_dot(self, t):
        return 0.0

    def chart_at(self, t, delta):
        return build_chart(RadialSurface(self.R0, self.center), delta)


@dataclass
class DistanceHierarchy:
    """Distance expansion data: the chart carries d0 as its r-coordinate.

    d1 is kept identically zero (its radial evolution equation has zero
    source for radial interfaces, see solve_d1_radial); k_impl in {2, 3}.
    """

    family: object
    time: float
    delta: float
    k_impl: int = 2

    def __post_init__(self):
        if self.k_impl not in (2, 3):
            raise ConfigurationError("k_impl must be 2 or 3")
        self.chart = self.family.chart_at(self.time, self.delta)

    @property
    def dim(self):
        return self.family.dim

    @property
    def radius(self):
        return self.family.radius(self.time)

    def at_time(self, t):
        return DistanceHierarchy(self.family, t, self.delta, self.k_impl)

    def d1_value(self):
        return 0.0


# ----------------------------------------------------------------------
# closed-form radial coefficient fields
# ----------------------------------------------------------------------

class ExpansionCoefficients:
    """Vectorized evaluators of the tube coefficient fields.

    All fields are functions of rho = |x - center|; N is the ambient
    dimension (2 for circles, 3 for spheres).
    """

    def __init__(self, hierarchy: DistanceHierarchy, tables=None, blend_width=None):
        self.hierarchy = hierarchy
        self.tables = tables or pr.profile_tables()
        self.N = hierarchy.dim
        self.R = hierarchy.radius
        self.R_dot = hierarchy.family.radius_dot(hierarchy.time)
        # band half-width for the two-branch chi0 evaluation
        self.blend_width = blend_width if blend_width is not None else 0.02 * self.R

    # -- distance derivatives -------------------------------------------
    def lap_d(self, rho):
        return (self.N - 1.0) / rho

    def lap2_d(self, rho):
        return (self.N - 1.0) * (3.0 - self.N) / rho**3

    def D0(self, rho):
        return (self.N - 1.0) * (self.N - 3.0) / (2.0 * rho**2)

    def dD0_dr(self, rho):
        return -(self.N - 1.0) * (self.N - 3.0) / rho**3

    def D1(self, rho):
        # every summand carries the vanishing first distance correction
        return np.zeros_like(np.asarray(rho, dtype=float))

    def d0_dot(self, rho):
        return np.full_like(np.asarray(rho, dtype=float), -self.R_dot)

    # -- solvability correction chi0 ------------------------------------
    def G0(self, rho):
        """The distance-law defect extended off the interface."""
        return (
            self.d0_dot(rho)
            + self.lap2_d(rho)
            - self.lap_d(rho) * self.D0(rho)
            - self.dD0_dr(rho)
        )

    def dG0_dr(self, rho):
        N = self.N
        return (
            -3.0 * (N - 1.0) * (3.0 - N) / rho**4
            + 1.5 * (N - 1.0) ** 2 * (N - 3.0) / rho**4
            - 3.0 * (N - 1.0) * (N - 3.0) / rho**4
        )

    def chi0(self, rho):
        """sigma/sigma_bar times G0/d0, with the gradient branch across Gamma.

        Quotient branch away from the interface, derivative branch in a
        narrow band, blended linearly.
        """
        rho = np.asarray(rho, dtype=float)
        t = self.tables
        pref = t.sigma / t.sigma_bar
        d0 = rho - self.R
        on_gamma = pref * self.dG0_dr(self.R)
        band = self.blend_width
        out = np.full(rho.shape, on_gamma, dtype=float)
        away = np.abs(d0) >= 1e-14
        quot = np.zeros_like(out)
        quot[away] = pref * self.G0(rho[away]) / d0[away]
        w = np.clip(np.abs(d0) / band, 0.0, 1.0)  # 0 on Gamma, 1 outside band
        out = (1.0 - w) * out + w * np.where(away, quot, on_gamma)
        return out

    # -- the mu2 solvability field ---------------------------------------
    def mu2(self, rho):
        """Second-order chemical-potential offset with lap(d2) = 0."""
        t = self.tables
        rho = np.asarray(rho, dtype=float)
        d0 = rho - self.R
        val = (
            (self.dD0_dr(rho) + 0.5 * self.lap_d(rho) * self.D0(rho)) * t.q2
            + self.lap_d(rho) * self.D0(rho) * t.q_gamma1
            + self.dD0_dr(rho) * t.q_gamma2
            + self.chi0(rho) * d0 * t.q_gamma3
        )
        return -val / t.sigma


def D_coeff(hierarchy: DistanceHierarchy, i, rho=None):
    """D_i on the tube (closed form for circles/spheres).

    i = 1 with the default d1 = 0 returns the zero reduction.
    """
    if i not in (0, 1):
        raise ValueError("i must be 0 or 1")
    coeffs = ExpansionCoefficients(hierarchy)
    if rho is None:
        rho = np.asarray([hierarchy.radius])
    return coeffs.D0(rho) if i == 0 else coeffs.D1(rho)


def chi0_field(hierarchy: DistanceHierarchy, rho=None):
    coeffs = ExpansionCoefficients(hierarchy)
    if rho is None:
        rho = np.asarray([hierarchy.radius])
    return coeffs.chi0(rho)


def mu2_constant(hierarchy: DistanceHierarchy, coeffs: ExpansionCoefficients = None):
    """mu2 on the interface (rho = R)."""
    coeffs = coeffs or ExpansionCoefficients(hierarchy)
    return float(coeffs.mu2(np.asarray([coeffs.R]))[0])


def solve_d1_radial(hierarchy: DistanceHierarchy, t_end, dt=1e-3):
    """First distance correction for radial interfaces, by RK4 in time.

    The evolution is d1' = (sigma_bar/sigma) chi0|_Gamma d1 + Xi0.  The
    source Xi0 integrates even z-profiles against the odd theta'' and
    vanishes identically by parity, so with d1(0) = 0 the correction stays
    zero; the integrator is kept as the general mechanism.
    """
    t = pr.profile_tables()
    xi0 = xi0_source(hierarchy)

    def rate(time, d1):
        h = hierarchy.at_time(time)
        c = ExpansionCoefficients(h, tables=t)
        chi_gamma = float(c.chi0(np.asarray([c.R]))[0])
        return (t.sigma_bar / t.sigma) * chi_gamma * d1 + xi0

    d1, time = 0.0, hierarchy.time
    while time < t_end - 1e-15:
        step = min(dt, t_end - time)
        k1 = rate(time, d1)
        k2 = rate(time + 0.5 * step, d1 + 0.5 * step * k1)
        k3 = rate(time + 0.5 * step, d1 + 0.5 * step * k2)
        k4 = rate(time + step, d1 + step * k3)
        d1 += step * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        time += step
    return d1


def xi0_source(hierarchy: DistanceHierarchy):
    """Source of the d1 equation; zero by parity, computed by quadrature.

    The order-zero remainder profile on the interface is
        Psi0 = a1 theta' g1 + a2 theta' g2 - [(a1 + 2 a2) q2 / (2 sigma)
               + (a1 q_g1 + a2 q_g2) / sigma] theta'
    (the chi0 d0 part vanishes on the interface), and the source combines
    the z-integrals of Psi0 and of its radial derivative against theta''.
    Every term is even in z, so each integral vanishes.
    """
    tbl = pr.profile_tables()
    z, w = tbl.z, tbl.weights
    tp = pr.theta_profile(z, 1)
    tpp = pr.theta_profile(z, 2)
    c = ExpansionCoefficients(hierarchy, tables=tbl)
    R, N = c.R, c.N

    def psi0_from(a1, a2):
        const = (a1 + 2.0 * a2) * tbl.q2 / (2.0 * tbl.sigma) + (
            a1 * tbl.q_gamma1 + a2 * tbl.q_gamma2
        ) / tbl.sigma
        return a1 * tp * tbl.gamma1.values + a2 * tp * tbl.gamma2.values - const * tp

    a1 = float(c.lap_d(R) * c.D0(R))
    a2 = float(c.dD0_dr(R))
    a1_prime = -1.5 * (N - 1.0) ** 2 * (N - 3.0) / R**4
    a2_prime = 3.0 * (N - 1.0) * (N - 3.0) / R**4
    int_psi = float(np.dot(w, psi0_from(a1, a2) * tpp))
    int_dpsi = float(np.dot(w, psi0_from(a1_prime, a2_prime) * tpp))
    return -(2.0 / tbl.sigma) * (int_dpsi + c.lap_d(R) * int_psi)


# ----------------------------------------------------------------------
# z-profile table splines and the cubic layer correction basis
# ----------------------------------------------------------------------

@lru_cache(maxsize=4)
def _profile_splines(window=pr.DEFAULT_WINDOW, n_nodes=pr.DEFAULT_NODES):
    t = pr.profile_tables(window, n_nodes)
    return {
        "alpha": CubicSpline(t.z, t.alpha.values),
        "gamma1": CubicSpline(t.z, t.gamma1.values),
        "gamma3": CubicSpline(t.z, t.gamma3.values),
    }


def _splines_for(tables):
    return _profile_splines(float(tables.z[-1]), len(tables.z))


@lru_cache(maxsize=2)
def _phi3_basis(window=pr.DEFAULT_WINDOW, n_nodes=pr.DEFAULT_NODES):
    """Partial solutions U_j with L U_j = P(w_j), P the kernel projection.

    The cubic layer equation L phi_3 = rhs has a separable rhs
        rhs = c_A (theta' alpha)' + c_1 theta' g1 + c_2 theta' g2
            + mu2 theta' + c_3 theta' g3,
    so phi_3 = sum_j c_j U_j.  The per-term kernel defects q_j recombine to
    zero through the mu2 balance; build_approximate asserts this.
    """
    t = pr.profile_tables(window, n_nodes)
    z, w = t.z, t.weights
    tp = pr.theta_profile(z, 1)
    tpp = pr.theta_profile(z, 2)
    basis = {
        "A": tpp * t.alpha.values + tp * t.alpha.deriv_values[1],
        "g1": tp * t.gamma1.values,
        "g2": tp * t.gamma2.values,
        "one": tp.copy(),
        "g3": tp * t.gamma3.values,
    }
    sols, defects = {}, {}
    for key, vals in basis.items():
        q = float(np.dot(w, vals * tp))
        defects[key] = q
        clean = vals - (q / t.sigma) * tp
        sols[key] = pr.solve_profile_ode(pr.Profile1D(z, clean, w), compat_rtol=1e-6)
    splines = {k: CubicSpline(z, s.values) for k, s in sols.items()}
    return splines, defects


# ----------------------------------------------------------------------
# assembling the approximate solution
# ----------------------------------------------------------------------

@dataclass
class ApproximateSolution:
    phi_a: np.ndarray
    mu_a: np.ndarray
    epsilon: float
    k_impl: int
    hierarchy: DistanceHierarchy
    domain: object

    @property
    def time(self):
        return self.hierarchy.time


@dataclass
class ResidualReport:
    r1_field: np.ndarray
    r2_field: np.ndarray
    r1_sup: float
    r1_l2: float
    r2_sup: float
    r2_l2: float
    epsilon: float
    k_impl: int


def inner_terms(hierarchy: DistanceHierarchy, coeffs: ExpansionCoefficients, order):
    """Evaluator (z, rho) -> (phi_term, mu_term) for one expansion order.

    mu terms exist for orders 0..2; the order-3 phi correction is available
    for radial interfaces, with no mu companion at this truncation.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be in 0..3")
    sp = _splines_for(coeffs.tables)

    if order == 0:
        def ev(z, rho):
            tp = pr.theta_profile(z, 1)
            return pr.theta_profile(z, 0), -coeffs.lap_d(rho) * tp
        return ev

    if order == 1:
        def ev(z, rho):
            tp = pr.theta_profile(z, 1)
            # lap(d1) = 0 at this truncation
            return np.zeros_like(np.asarray(z, dtype=float)), coeffs.D0(rho) * z * tp
        return ev

    if order == 2:
        def ev(z, rho):
            tp = pr.theta_profile(z, 1)
            phi2 = coeffs.D0(rho) * tp * sp["alpha"](z)
            d0 = rho - coeffs.R
            mu2v = (
                coeffs.lap_d(rho) * coeffs.D0(rho) * tp * sp["gamma1"](z)
                + coeffs.dD0_dr(rho) * tp * (-0.5 * z * z)
                + coeffs.D1(rho) * z * tp
                + coeffs.mu2(rho) * tp
                + coeffs.chi0(rho) * d0 * tp * sp["gamma3"](z)
            )
            return phi2, mu2v
        return ev

    # order 3: phi only
    tbl = coeffs.tables
    basis, defects = _phi3_basis(float(tbl.z[-1]), len(tbl.z))

    def ev(z, rho):
        cA = 2.0 * coeffs.dD0_dr(rho) + coeffs.D0(rho) * coeffs.lap_d(rho)
        c1 = coeffs.lap_d(rho) * coeffs.D0(rho)
        c2 = coeffs.dD0_dr(rho)
        cc = coeffs.mu2(rho)
        c3 = coeffs.chi0(rho) * (rho - coeffs.R)
        # the kernel defects must cancel through the mu2 balance
        total_defect = (
            cA * defects["A"] + c1 * defects["g1"] + c2 * defects["g2"]
            + cc * defects["one"] + c3 * defects["g3"]
        )
        scale = float(np.max(np.abs(cA) + np.abs(c1) + np.abs(c2)
                             + np.abs(cc) + np.abs(c3))) + 1e-30
        if np.max(np.abs(total_defect)) > 1e-6 * scale:
            raise ConfigurationError(
                f"cubic-layer solvability defect {np.max(np.abs(total_defect)):.2e}"
            )
        phi3 = (
            cA * basis["A"](z) + c1 * basis["g1"](z) + c2 * basis["g2"](z)
            + cc * basis["one"](z) + c3 * basis["g3"](z)
        )
        return phi3, np.zeros_like(np.asarray(z, dtype=float))

    return ev


def _check_scales(hierarchy, epsilon, h, tables):
    if epsilon > hierarchy.delta / 8.0 + 1e-12:
        raise ConfigurationError(
            f"scale separation violated: eps={epsilon} > delta/8={hierarchy.delta / 8}"
        )
    if h > epsilon / 4.0 + 1e-12:
        raise ConfigurationError(
            f"grid too coarse: h={h} > eps/4={epsilon / 4}"
        )
    if hierarchy.delta / epsilon > tables.z[-1]:
        raise ConfigurationError(
            f"tube wider than the profile window: delta/eps="
            f"{hierarchy.delta / epsilon:.1f} > {tables.z[-1]:.1f};"
            " build the coefficients with a wider table window"
        )


def build_approximate(hierarchy: DistanceHierarchy, coeffs: ExpansionCoefficients,
                      epsilon, domain: GridDomain):
    """Glued inner/outer approximate solution on a periodic 2D grid."""
    if hierarchy.dim != 2:
        raise ConfigurationError("grid assembly is 2D; use the radial builder for spheres")
    _check_scales(hierarchy, epsilon, domain.h, coeffs.tables)
    center = hierarchy.family.center
    rho = np.sqrt((domain.X - center[0]) ** 2 + (domain.Y - center[1]) ** 2)
    rho = np.maximum(rho, 1e-12)
    phi_a, mu_a = _assemble_fields(hierarchy, coeffs, epsilon, rho)
    return ApproximateSolution(phi_a, mu_a, epsilon, hierarchy.k_impl, hierarchy, domain)


def build_approximate_radial(hierarchy: DistanceHierarchy,
                             coeffs: ExpansionCoefficients, epsilon, rho):
    """Same assembly on a 1D radial grid (spheres / circles by symmetry)."""
    rho = np.maximum(np.asarray(rho, dtype=float), 1e-12)
    return _assemble_fields(hierarchy, coeffs, epsilon, rho)


def _assemble_fields(hierarchy, coeffs, epsilon, rho):
    delta = hierarchy.delta
    r = rho - hierarchy.radius
    zeta = cutoff_zeta(r, delta)
    in_tube = zeta > 0.0

    phi_a = np.where(r >= 0, 1.0, -1.0)
    mu_a = np.zeros_like(rho)
    if not np.any(in_tube):
        return phi_a, mu_a

    z = r[in_tube] / epsilon
    rho_t = rho[in_tube]
    phi_in = np.zeros_like(z)
    mu_in = np.zeros_like(z)
    orders = range(hierarchy.k_impl + 1)
    for order in orders:
        if order == 3 and hierarchy.k_impl < 3:
            continue
        ev = inner_terms(hierarchy, coeffs, order)
        phi_term, mu_term = ev(z, rho_t)
        phi_in = phi_in + epsilon**order * phi_term
        mu_in = mu_in + epsilon**order * mu_term

    zt = zeta[in_tube]
    outer = np.where(r[in_tube] >= 0, 1.0, -1.0)
    phi_a[in_tube] = zt * phi_in + (1.0 - zt) * outer
    mu_a[in_tube] = zt * mu_in
    return phi_a, mu_a


def residual(approx: ApproximateSolution, hierarchy: DistanceHierarchy,
             dt_probe=1e-5):
    """Raw defects of the approximate solution in the phase-field system.

    r1 = eps^3 d_t phi_a - eps^2 lap mu_a + f''(phi_a) mu_a
    r2 = eps mu_a + eps^2 lap phi_a - f'(phi_a)

    reported unnormalized (no eps power scaled out), with sup and L2 norms.
    The time derivative is a centered difference of rebuilds at +-dt_probe.
    """
    if dt_probe <= 0:
        raise ValueError("dt_probe must be positive")
    eps = approx.epsilon
    dom = approx.domain
    t = hierarchy.time

    builds = []
    for tshift in (t - dt_probe, t + dt_probe):
        h_s = hierarchy.at_time(tshift)
        c_s = ExpansionCoefficients(h_s)
        builds.append(build_approximate(h_s, c_s, eps, dom))
    dphi_dt = (builds[1].phi_a - builds[0].phi_a) / (2.0 * dt_probe)

    phi, mu = approx.phi_a, approx.mu_a
    r1 = eps**3 * dphi_dt - eps**2 * dom.laplacian(mu) + pr.double_well(phi, 2) * mu
    r2 = eps * mu + eps**2 * dom.laplacian(phi) - pr.double_well(phi, 1)
    return ResidualReport(
        r1_field=r1,
        r2_field=r2,
        r1_sup=float(np.max(np.abs(r1))),
        r1_l2=dom.l2_norm(r1),
        r2_sup=float(np.max(np.abs(r2))),
        r2_l2=dom.l2_norm(r2),
        epsilon=eps,
        k_impl=approx.k_impl,
    )
