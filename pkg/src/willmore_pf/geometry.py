"""Interfaces, signed-distance tubular charts, grids, and surface calculus.

Supported interfaces are closed planar polyline curves (with periodic cubic
interpolation) and radially symmetric spheres.  The computational domain is a
periodic box; interfaces are expected to stay well away from its boundary so
the periodic wrap is inert.

Sign conventions: the normal is the outward one, the signed distance r(x) is
negative inside the interface, and curvature of a circle of radius R is +1/R.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from skimage import measure

from .errors import ChartInjectivityError, GeometryError, NoInterfaceError

TWO_PI = 2.0 * np.pi


# ----------------------------------------------------------------------
# closed planar curves
# ----------------------------------------------------------------------

def _segments_intersect(p, q):
    """Vectorized proper-intersection test between all segment pairs.

    p, q: (m, 2) arrays of segment starts/ends.  Neighbouring segments share
    endpoints and are skipped.
    """
    m = len(p)
    d = q - p
    # orientation of point c relative to segment (a, a+ab)
    px = p[:, None, :]
    dx = d[:, None, :]
    rel1 = p[None, :, :] - px
    rel2 = q[None, :, :] - px
    c1 = dx[..., 0] * rel1[..., 1] - dx[..., 1] * rel1[..., 0]
    c2 = dx[..., 0] * rel2[..., 1] - dx[..., 1] * rel2[..., 0]
    straddle = (c1 * c2) < 0
    cross = straddle & straddle.T
    idx = np.arange(m)
    adjacent = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (
        np.abs(idx[:, None] - idx[None, :]) == m - 1
    )
    cross &= ~adjacent
    return bool(np.any(cross))


class ClosedCurve:
    """Closed polyline with arclength bookkeeping and spline refinement.

    nodes: (m, 2) array, consecutive and not repeated; the segment from the
    last node back to the first closes the curve.
    """

    def __init__(self, nodes, check_simple=True):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or len(nodes) < 4:
            raise GeometryError("need an (m,2) array with m >= 4")
        if np.any(~np.isfinite(nodes)):
            raise GeometryError("non-finite node coordinates")
        edges = np.diff(np.vstack([nodes, nodes[:1]]), axis=0)
        lens = np.hypot(edges[:, 0], edges[:, 1])
        if np.any(lens == 0.0):
            raise GeometryError("repeated consecutive nodes")
        if check_simple and _segments_intersect(nodes, nodes + edges):
            raise GeometryError("curve is self-intersecting")
        self.nodes = nodes
        self.edge_lengths = lens
        self.arclength_params = np.concatenate(([0.0], np.cumsum(lens)))[:-1]
        self.total_length = float(np.sum(lens))

    @classmethod
    def circle(cls, radius, n_nodes=256, center=(0.0, 0.0)):
        phi = TWO_PI * np.arange(n_nodes) / n_nodes
        pts = np.stack(
            [center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)],
            axis=1,
        )
        return cls(pts, check_simple=False)

    @classmethod
    def ellipse(cls, a, b, n_nodes=256, center=(0.0, 0.0)):
        phi = TWO_PI * np.arange(n_nodes) / n_nodes
        pts = np.stack(
            [center[0] + a * np.cos(phi), center[1] + b * np.sin(phi)], axis=1
        )
        return cls(pts, check_simple=False).resample(n_nodes)

    def __len__(self):
        return len(self.nodes)

    def spline(self):
        """Periodic cubic spline of position against current arclength."""
        s = np.concatenate([self.arclength_params, [self.total_length]])
        pts = np.vstack([self.nodes, self.nodes[:1]])
        return CubicSpline(s, pts, bc_type="periodic")

    def resample(self, n_nodes=None):
        """Redistribute nodes to uniform arclength via the spline."""
        if n_nodes is None:
            n_nodes = len(self.nodes)
        sp = self.spline()
        # two passes: spline arclength differs slightly from polyline arclength
        s_new = self.total_length * np.arange(n_nodes) / n_nodes
        return ClosedCurve(sp(s_new), check_simple=False)

    def node_weights(self):
        """Dual arclengths; quadrature weights for surface integrals."""
        return 0.5 * (self.edge_lengths + np.roll(self.edge_lengths, 1))

    def tangents(self):
        sp = self.spline()
        d = sp(self.arclength_params, 1)
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def normals(self):
        """Outward unit normals (counterclockwise orientation assumed)."""
        t = self.tangents()
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        if self.signed_area() < 0:  # clockwise curve: flip
            n = -n
        return n

    def signed_area(self):
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        return 0.5 * float(np.sum(x * yn - xn * y))

    def curvature(self):
        """Signed curvature per node; circumscribed-circle formula on the
        spline-refined neighbour triple (positive for a convex CCW curve)."""
        p0 = np.roll(self.nodes, 1, axis=0)
        p1 = self.nodes
        p2 = np.roll(self.nodes, -1, axis=0)
        a = p1 - p0
        b = p2 - p1
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        la = np.linalg.norm(a, axis=1)
        lb = np.linalg.norm(b, axis=1)
        lc = np.linalg.norm(p2 - p0, axis=1)
        kappa = 2.0 * cross / (la * lb * lc)
        if self.signed_area() < 0:
            kappa = -kappa
        return kappa

    def rigid_transform(self, angle=0.0, shift=(0.0, 0.0)):
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        return ClosedCurve(self.nodes @ R.T + np.asarray(shift), check_simple=False)


@dataclass
class RadialSurface:
    """Sphere of given radius; the only 3D interface in scope."""

    radius: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dim: int = 3

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("radius must be positive")
        self.center = np.asarray(self.center, dtype=float)


# ----------------------------------------------------------------------
# surface calculus on curves
# ----------------------------------------------------------------------

def laplace_beltrami(curve: ClosedCurve, values):
    """Periodic arclength Laplacian, conservative 3-point form.

    Exact telescoping makes the weighted node sum vanish to roundoff; the
    stencil is second-order on the near-uniform grids produced by
    resample().
    """
    values = np.asarray(values, dtype=float)
    hR = curve.edge_lengths                 # edge i -> i+1
    hL = np.roll(curve.edge_lengths, 1)     # edge i-1 -> i
    fwd = (np.roll(values, -1) - values) / hR
    bwd = (values - np.roll(values, 1)) / hL
    return (fwd - bwd) / (0.5 * (hR + hL))


def surface_integral(curve: ClosedCurve, values):
    return float(np.dot(curve.node_weights(), np.asarray(values)))


# ----------------------------------------------------------------------
# tubular charts
# ----------------------------------------------------------------------

class TubularChart:
    """Signed-distance chart of the tube {|r| < delta} around an interface.

    For circles and spheres every coefficient is closed-form.  For polyline
    curves the foot point is found by Newton projection on the periodic
    spline, seeded from the nearest node.
    """

    def __init__(self, interface, delta):
        self.interface = interface
        self.delta = float(delta)
        if isinstance(interface, RadialSurface):
            self.kind = "sphere"
            self.radius = interface.radius
            self.center = interface.center
            self.n_codim = 2  # two principal curvatures
            kap_max = 1.0 / self.radius
        elif isinstance(interface, ClosedCurve):
            kap = interface.curvature()
            c, R = _circle_fit(interface)
            if np.max(np.abs(np.linalg.norm(interface.nodes - c, axis=1) - R)) < 1e-9 * R:
                self.kind = "circle"
                self.radius = float(R)
                self.center = np.asarray(c, dtype=float)
            else:
                self.kind = "curve"
                self._spline = interface.spline()
                self._kappa = kap
            self.n_codim = 1
            kap_max = float(np.max(np.abs(kap)))
        else:
            raise GeometryError(f"unsupported interface type {type(interface)}")
        if kap_max > 0 and self.delta >= 1.0 / kap_max:
            raise ChartInjectivityError(
                f"delta {self.delta} >= least focal distance {1.0 / kap_max:.4f}"
            )

    # -- radial helpers ------------------------------------------------
    def _rho(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sphere":
            d = x - self.center
        else:
            d = x - self.center[: x.shape[-1]]
        return np.linalg.norm(d, axis=-1)

    def signed_distance(self, x):
        """r(x) and an inside-tube mask.

        The circle/sphere closed form is globally valid; polyline projections
        are only trustworthy near the tube, so there the value is clamped to
        +-2 delta outside it.
        """
        if self.kind in ("circle", "sphere"):
            r = self._rho(x) - self.radius
        else:
            r, _ = self._project(x)
            r = np.clip(r, -2.0 * self.delta, 2.0 * self.delta)
        inside = np.abs(r) <= self.delta
        return r, inside

    def raw_distance(self, x):
        """r(x) without clamping (valid while the projection is unique)."""
        if self.kind in ("circle", "sphere"):
            return self._rho(x) - self.radius
        return self._project(x)[0]

    def surface_coordinate(self, x):
        """s(x): angle for circles, arclength of the foot point for curves."""
        if self.kind == "circle":
            d = np.asarray(x, dtype=float) - self.center[:2]
            return np.arctan2(d[..., 1], d[..., 0])
        if self.kind == "sphere":
            raise GeometryError("spheres carry no scalar surface coordinate")
        return self._project(x)[1]

    def _project(self, x):
        """Foot-point projection for polyline curves: (r, s_arclength)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        curve = self.interface
        sp = self._spline
        d2 = ((x[:, None, :] - curve.nodes[None, :, :]) ** 2).sum(axis=2)
        s = curve.arclength_params[np.argmin(d2, axis=1)].copy()
        L = curve.total_length
        for _ in range(30):
            p = sp(s)
            dp = sp(s, 1)
            ddp = sp(s, 2)
            rel = x - p
            g = -(rel * dp).sum(axis=1)
            H = (dp * dp).sum(axis=1) - (rel * ddp).sum(axis=1)
            H = np.where(np.abs(H) < 1e-12, 1e-12, H)
            step = -g / H
            step = np.clip(step, -0.2 * L, 0.2 * L)
            s = (s + step) % L
            if np.max(np.abs(step)) < 1e-13 * L:
                break
        p = sp(s)
        dp = sp(s, 1)
        nvec = np.stack([dp[:, 1], -dp[:, 0]], axis=1)
        nvec /= np.linalg.norm(nvec, axis=1, keepdims=True)
        if curve.signed_area() < 0:
            nvec = -nvec
        rel = x - p
        r = np.sign((rel * nvec).sum(axis=1)) * np.linalg.norm(rel, axis=1)
        return r.reshape(np.shape(x[..., 0])), s

    # -- curvature coefficients ----------------------------------------
    def principal_curvatures(self, s=None):
        if self.kind == "circle":
            k = 1.0 / self.radius
            return k if s is None else np.full(np.shape(s), k)
        if self.kind == "sphere":
            return np.array([1.0 / self.radius, 1.0 / self.radius])
        return self._kappa if s is None else np.interp(
            np.mod(s, self.interface.total_length),
            np.concatenate([self.interface.arclength_params,
                            [self.interface.total_length]]),
            np.concatenate([self._kappa, self._kappa[:1]]),
        )

    def h_coefficient(self, s=None):
        """h(s) = Laplacian of r on the interface (= sum of curvatures)."""
        if self.kind == "sphere":
            return 2.0 / self.radius
        k = self.principal_curvatures(s)
        return k if self.kind == "curve" else np.asarray(k).reshape(np.shape(k))

    def b_coefficient(self, s=None):
        """First r-derivative of Laplacian(r) on the interface."""
        if self.kind == "sphere":
            return -2.0 / self.radius ** 2
        k = self.principal_curvatures(s)
        return -(k ** 2)

    def a_coefficient(self, s=None):
        """Second r-derivative coefficient in the expansion of Laplacian(r)."""
        if self.kind == "sphere":
            return 2.0 / self.radius ** 3
        k = self.principal_curvatures(s)
        return k ** 3

    def jacobian(self, r, s=None):
        """J(r, s): product of (1 + r kappa_i); equals 1 at r = 0."""
        r = np.asarray(r, dtype=float)
        if self.kind == "sphere":
            return (1.0 + r / self.radius) ** 2
        k = self.principal_curvatures(s)
        return 1.0 + r * k

    def laplacian_of_distance(self, r, s=None):
        """Delta r in the tube: sum of kappa_i / (1 + r kappa_i)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "sphere":
            return 2.0 / (self.radius + r)
        k = self.principal_curvatures(s)
        return k / (1.0 + r * k)

    def chart_point(self, s, r):
        """X_0(s) + r n(s); inverse of the (r, s) coordinates."""
        if self.kind == "circle":
            rad = self.radius + np.asarray(r)
            return np.stack(
                [self.center[0] + rad * np.cos(s), self.center[1] + rad * np.sin(s)],
                axis=-1,
            )
        if self.kind == "sphere":
            raise GeometryError("spheres carry no scalar surface coordinate")
        sp = self._spline
        p = sp(np.atleast_1d(s))
        dp = sp(np.atleast_1d(s), 1)
        nvec = np.stack([dp[:, 1], -dp[:, 0]], axis=1)
        nvec /= np.linalg.norm(nvec, axis=1, keepdims=True)
        if self.interface.signed_area() < 0:
            nvec = -nvec
        return p + np.asarray(r).reshape(-1, 1) * nvec


def _circle_fit(curve: ClosedCurve):
    """Least-squares circle through the nodes (Kasa fit)."""
    x, y = curve.nodes[:, 0], curve.nodes[:, 1]
    A = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    b = x * x + y * y
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy, c = sol
    R = np.sqrt(c + cx * cx + cy * cy)
    return np.array([cx, cy]), R


def build_chart(interface, delta):
    return TubularChart(interface, delta)


def default_delta(interface, fraction=0.5):
    """Half the least curvature radius; the paper leaves delta free."""
    if isinstance(interface, RadialSurface):
        return fraction * interface.radius
    kap = np.max(np.abs(interface.curvature()))
    return fraction / kap


# ----------------------------------------------------------------------
# periodic grid domain and spectral operators
# ----------------------------------------------------------------------

class GridDomain:
    """Uniform periodic box [-L/2, L/2)^2 with FFT-based calculus."""

    def __init__(self, extent, n):
        if n % 2 != 0:
            raise ValueError("n must be even")
        self.extent = float(extent)
        self.n = int(n)
        self.h = self.extent / self.n
        ax = -0.5 * self.extent + self.h * np.arange(self.n)
        self.axis = ax
        self.X, self.Y = np.meshgrid(ax, ax, indexing="ij")
        kx = TWO_PI * np.fft.fftfreq(self.n, d=self.h)
        ky = TWO_PI * np.fft.rfftfreq(self.n, d=self.h)
        self.KX = kx[:, None]
        self.KY = ky[None, :]
        self.K2 = self.KX ** 2 + self.KY ** 2

    def rfft(self, f):
        import scipy.fft as sfft

        return sfft.rfft2(f)

    def irfft(self, fh):
        import scipy.fft as sfft

        return sfft.irfft2(fh, s=(self.n, self.n))

    def laplacian(self, f):
        return self.irfft(-self.K2 * self.rfft(f))

    def gradient(self, f):
        fh = self.rfft(f)
        return (
            self.irfft(1j * self.KX * fh),
            self.irfft(1j * self.KY * fh),
        )

    def integral(self, f):
        return float(np.sum(f) * self.h ** 2)

    def l2_norm(self, f):
        return float(np.sqrt(self.integral(np.asarray(f) ** 2)))

    def points(self):
        return np.stack([self.X.ravel(), self.Y.ravel()], axis=1)

    def interp_bilinear(self, f, pts):
        """Periodic bilinear interpolation of a grid field at (m,2) points."""
        u = (pts[:, 0] + 0.5 * self.extent) / self.h
        v = (pts[:, 1] + 0.5 * self.extent) / self.h
        i0 = np.floor(u).astype(int)
        j0 = np.floor(v).astype(int)
        fu = u - i0
        fv = v - j0
        i0 %= self.n
        j0 %= self.n
        i1 = (i0 + 1) % self.n
        j1 = (j0 + 1) % self.n
        return (
            f[i0, j0] * (1 - fu) * (1 - fv)
            + f[i1, j0] * fu * (1 - fv)
            + f[i0, j1] * (1 - fu) * fv
            + f[i1, j1] * fu * fv
        )


# ----------------------------------------------------------------------
# level-set extraction and curve metric
# ----------------------------------------------------------------------

def extract_zero_level(fieldvals, domain: GridDomain):
    """Zero contour of a grid scalar as an ordered closed polyline.

    Sub-cell linear interpolation (marching squares).  If several components
    exist, the longest is returned and flagged.  Returns (curve, flags) with
    flags = {'multiple': bool, 'closed': bool}.
    """
    f = np.asarray(fieldvals, dtype=float)
    if f.min() > 0 or f.max() < 0:
        raise NoInterfaceError("field has no sign change")
    contours = measure.find_contours(f, 0.0)
    if not contours:
        raise NoInterfaceError("no zero contour found")

    def length(c):
        return np.sum(np.hypot(*(np.diff(c, axis=0).T)))

    contours.sort(key=length, reverse=True)
    c = contours[0]
    closed = bool(np.allclose(c[0], c[-1]))
    if closed:
        c = c[:-1]
    pts = np.column_stack(
        [-0.5 * domain.extent + c[:, 0] * domain.h,
         -0.5 * domain.extent + c[:, 1] * domain.h]
    )
    flags = {"multiple": len(contours) > 1, "closed": closed}
    curve = ClosedCurve(pts, check_simple=False)
    return curve, flags


def _point_segment_distance(pts, a, b):
    """Min distance from each point to the polyline segments (a[i], b[i])."""
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    denom = np.where(denom == 0.0, 1.0, denom)
    rel = pts[:, None, :] - a[None, :, :]
    t = (rel * ab[None, :, :]).sum(axis=2) / denom[None, :]
    t = np.clip(t, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(pts[:, None, :] - proj, axis=2)
    return d.min(axis=1)


def hausdorff(curve_a: ClosedCurve, curve_b: ClosedCurve):
    """Symmetric Hausdorff distance via node-to-segment projection."""
    a0 = curve_a.nodes
    a1 = np.roll(a0, -1, axis=0)
    b0 = curve_b.nodes
    b1 = np.roll(b0, -1, axis=0)
    d_ab = _point_segment_distance(a0, b0, b1).max()
    d_ba = _point_segment_distance(b0, a0, a1).max()
    return float(max(d_ab, d_ba))
