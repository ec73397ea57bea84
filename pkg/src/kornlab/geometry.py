"""Zero-Gaussian-curvature shell mid-surfaces.

A surface is described by four profiles ``B(z)``, ``a(theta)``, ``b(theta)``,
``c(theta)`` through

    A_z = B'(z),   A_theta = a(theta) B(z) + b(theta),   kappa_theta = c / A_theta,

with ``kappa_z = 0``.  Cylinders and cones over closed curves additionally
carry a 3D embedding ``(t, theta, z) -> r(theta, z) + t n(theta, z)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator, make_interp_spline

from .errors import (
    ApexIncluded,
    CurveParseError,
    GeometryError,
    NoEmbedding,
    NonClosed,
    NonPeriodic,
    OutOfDomain,
    PositivityViolation,
    SelfIntersection,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Profile1D:
    """Scalar function of one variable together with its derivatives.

    ``derivs[k]`` evaluates the k-th derivative.  Spline-backed profiles
    return zero beyond their polynomial degree; expression-backed profiles
    carry derivatives up to ``len(derivs) - 1``.
    """

    derivs: tuple
    period: Optional[float] = None
    expr: Optional[sp.Expr] = None
    degree: Optional[int] = None
    label: str = ""

    def __call__(self, x):
        return self.d(x, 0)

    def derivative(self, x):
        return self.d(x, 1)

    def d(self, x, k: int = 0):
        x = np.asarray(x, dtype=float)
        if self.period is not None:
            x = np.mod(x, self.period)
        if k < len(self.derivs):
            out = self.derivs[k](x)
            return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()
        if self.degree is not None:
            return np.zeros_like(x)
        raise ValueError(f"profile {self.label!r} has no derivative of order {k}")

    @classmethod
    def from_expr(cls, expr, var="x", period=None, order=6, label=""):
        """Closed-form profile; derivatives are taken symbolically."""
        sym = sp.Symbol(var, real=True) if isinstance(var, str) else var
        e = sp.sympify(expr, locals={var if isinstance(var, str) else var.name: sym})
        derivs = []
        cur = e
        for _ in range(order + 1):
            derivs.append(sp.lambdify(sym, cur, modules="numpy"))
            cur = sp.diff(cur, sym)
        return cls(tuple(derivs), period=period, expr=e, label=label or str(e))

    @classmethod
    def constant(cls, value: float, period=None):
        # all derivatives of order >= 2 vanish, flagged through degree=0
        prof = cls.from_expr(sp.nsimplify(value), period=period, order=1, label=str(value))
        return cls(prof.derivs, period, prof.expr, degree=0, label=prof.label)

    @classmethod
    def from_samples(cls, x, y, period=None, k=3, label="spline"):
        """Interpolating spline of degree ``k``; periodic when ``period`` is set."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if period is not None:
            x = np.append(x, x[0] + period)
            y = np.append(y, y[0])
            spl = make_interp_spline(x, y, k=k, bc_type="periodic")
        else:
            spl = make_interp_spline(x, y, k=k)
        derivs = tuple([spl] + [spl.derivative(j) for j in range(1, k + 1)])
        return cls(derivs, period=period, degree=k, label=label)


def _as_profile(p, period=None) -> Profile1D:
    if isinstance(p, Profile1D):
        return p
    if isinstance(p, (int, float)):
        return Profile1D.constant(float(p), period=period)
    return Profile1D.from_expr(p, period=period)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


class ArclengthCurve:
    """Closed curve parametrized by arc length on ``[0, length)``.

    ``eval(theta, k)`` returns the k-th arc-length derivative as an array of
    shape ``(dim, *theta.shape)`` for k = 0, 1, 2.
    """

    kind: str
    length: float

    def eval(self, theta, k=0):
        raise NotImplementedError

    def curvature(self, theta):
        """Signed planar curvature, or the triple product (s, s', s'') on the sphere."""
        g0, g1, g2 = (self.eval(theta, k) for k in range(3))
        if self.kind == "planar":
            return g1[0] * g2[1] - g1[1] * g2[0]
        return np.einsum("i...,i...->...", g0, np.cross(g1, g2, axis=0))

    def curvature_profile(self) -> Profile1D:
        raise NotImplementedError


class AnalyticCurve(ArclengthCurve):
    """Curve given by sympy expressions in the arc-length symbol ``s``."""

    def __init__(self, exprs, s, length, kind="planar"):
        self.kind = kind
        self.length = float(length)
        self.s = s
        self.exprs = [sp.sympify(e) for e in exprs]
        self._d = []
        cur = sp.Matrix(self.exprs)
        for _ in range(4):
            self._d.append(cur)
            cur = cur.diff(s)
        self._f = [sp.lambdify(s, list(m), modules="numpy") for m in self._d]

    def eval(self, theta, k=0):
        theta = np.mod(np.asarray(theta, dtype=float), self.length)
        out = self._f[k](theta)
        return np.stack([np.broadcast_to(np.asarray(o, dtype=float), theta.shape) for o in out])

    def curvature_profile(self):
        d1, d2 = self._d[1], self._d[2]
        if self.kind == "planar":
            kap = d1[0] * d2[1] - d1[1] * d2[0]
        else:
            kap = sp.Matrix(self._d[0]).dot(d1.cross(d2))
        kap = sp.simplify(kap)
        x = sp.Symbol("x", real=True)
        return Profile1D.from_expr(kap.subs(self.s, x), var=x, period=self.length, label="curvature")


class SplineCurve(ArclengthCurve):
    """Arc-length reparametrization of a sampled closed curve.

    The samples are interpolated by a periodic quintic spline in the index
    parameter ``u``.  Arc length ``s(u)`` is accumulated by Gauss-Legendre
    quadrature of ``|f'(u)|`` over knot intervals, inverted by monotone
    cubic interpolation and polished with Newton steps, so ``|Gamma'| = 1``
    holds to round-off.
    """

    def __init__(self, points, kind="planar", degree=5):
        pts = np.asarray(points, dtype=float)
        self.kind = kind
        n = len(pts)
        self._n = n
        u = np.arange(n + 1, dtype=float)
        closed = np.vstack([pts, pts[:1]])
        self._spl = make_interp_spline(u, closed, k=degree, bc_type="periodic")
        self._dspl = [self._spl] + [self._spl.derivative(j) for j in range(1, 4)]
        # cumulative arc length at integer knots
        mid = 0.5 * (_GL_NODES + 1.0)
        uq = (np.arange(n)[:, None] + mid[None, :]).ravel()
        sp_ = self._speed(uq).reshape(n, -1)
        seg = 0.5 * sp_ @ _GL_WEIGHTS
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self._cum[-1])
        self._inv = PchipInterpolator(self._cum, u)

    # raw (index-parameter) derivatives, normalized onto the sphere if needed
    def _raw(self, uu, kmax=2):
        uu = np.mod(uu, self._n)
        S = [self._dspl[j](uu) for j in range(kmax + 1)]
        S = [np.moveaxis(s, -1, 0) for s in S]
        if self.kind == "planar":
            return S
        return _normalize_jet(S)

    def _speed(self, uu):
        return np.linalg.norm(self._raw(uu, 1)[1], axis=0)

    def _s_of_u(self, uu):
        uu = np.asarray(uu, dtype=float)
        k = np.clip(np.floor(uu).astype(int), 0, self._n - 1)
        frac = uu - k
        mid = 0.5 * (_GL_NODES + 1.0)
        uq = k[..., None] + frac[..., None] * mid
        sp_ = self._speed(uq.ravel()).reshape(uq.shape)
        return self._cum[k] + 0.5 * frac * (sp_ @ _GL_WEIGHTS)

    def param_of_arclength(self, theta):
        theta = np.mod(np.asarray(theta, dtype=float), self.length)
        uu = self._inv(theta)
        for _ in range(6):
            uu = uu - (self._s_of_u(uu) - theta) / self._speed(uu)
            uu = np.clip(uu, 0.0, float(self._n))
        return uu

    def eval(self, theta, k=0):
        uu = self.param_of_arclength(theta)
        f = self._raw(uu, 2)
        if k == 0:
            return f[0]
        speed = np.linalg.norm(f[1], axis=0)
        tan = f[1] / speed
        if k == 1:
            return tan
        if k == 2:
            proj = np.einsum("i...,i...->...", tan, f[2])
            return (f[2] - proj * tan) / speed**2
        raise ValueError("only derivatives up to order 2 are available")

    def curvature_profile(self, samples=None):
        m = samples or max(4 * self._n, 512)
        th = np.arange(m) * (self.length / m)
        return Profile1D.from_samples(th, self.curvature(th), period=self.length, k=5,
                                      label="curvature")


def _normalize_jet(S):
    """Derivatives (orders 0..len(S)-1) of S/|S| from those of S."""
    q = [np.einsum("i...,i...->...", S[0], S[0])]
    if len(S) > 1:
        q.append(2 * np.einsum("i...,i...->...", S[0], S[1]))
    if len(S) > 2:
        q.append(2 * (np.einsum("i...,i...->...", S[1], S[1])
                      + np.einsum("i...,i...->...", S[0], S[2])))
    g = [q[0] ** -0.5]
    if len(S) > 1:
        g.append(-0.5 * q[0] ** -1.5 * q[1])
    if len(S) > 2:
        g.append(0.75 * q[0] ** -2.5 * q[1] ** 2 - 0.5 * q[0] ** -1.5 * q[2])
    out = [S[0] * g[0]]
    if len(S) > 1:
        out.append(S[1] * g[0] + S[0] * g[1])
    if len(S) > 2:
        out.append(S[2] * g[0] + 2 * S[1] * g[1] + S[0] * g[2])
    return out


@dataclass
class PlanarCurve:
    """Ordered samples of a closed curve (planar 2D, or on the unit sphere).

    The curve is implicitly closed: the last sample joins the first.
    """

    points: np.ndarray
    kind: str = "planar"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if self.kind not in ("planar", "spherical"):
            raise GeometryError(f"unknown curve kind {self.kind!r}")
        dim = 2 if self.kind == "planar" else 3
        if pts.ndim != 2 or pts.shape[1] != dim:
            raise GeometryError(f"{self.kind} curve needs {dim} coordinates per point")
        if len(pts) < 8:
            raise GeometryError("at least 8 samples are required")
        if np.linalg.norm(pts[0] - pts[-1]) < 1e-14 * (1 + np.abs(pts).max()):
            pts = pts[:-1]
        if self.kind == "spherical":
            r = np.linalg.norm(pts, axis=1)
            if np.max(np.abs(r - 1.0)) > 1e-6:
                raise GeometryError("spherical curve points must lie on the unit sphere")
            pts = pts / r[:, None]
            if np.any(pts[:, 2] <= 0):
                raise GeometryError("spherical curve must lie in the northern hemisphere")
        self.points = pts
        self._check_closed_simple()

    def _plane_coords(self):
        if self.kind == "planar":
            return self.points
        # gnomonic projection: great circles become straight lines
        return self.points[:, :2] / self.points[:, 2:3]

    def _check_closed_simple(self):
        from shapely.geometry import LinearRing

        xy = self._plane_coords()
        seg = np.linalg.norm(np.diff(xy, axis=0), axis=1)
        gap = np.linalg.norm(xy[0] - xy[-1])
        if gap > 10.0 * np.median(seg):
            raise NonClosed(f"closing gap {gap:.3g} exceeds 10x the median spacing")
        if not LinearRing(xy).is_simple:
            raise SelfIntersection("curve is not simple")

    def signed_area(self):
        xy = self._plane_coords()
        x, y = xy[:, 0], xy[:, 1]
        return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)

    def reparametrize(self) -> SplineCurve:
        pts = self.points
        if self.signed_area() < 0:
            pts = pts[::-1]
        return SplineCurve(pts, kind=self.kind)

    @property
    def length(self):
        return self.reparametrize().length


def read_curve_file(path) -> PlanarCurve:
    """Parse ``planar N`` / ``spherical N`` followed by N coordinate rows."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip() and not ln.strip().startswith("#")]
    if not body:
        raise CurveParseError("empty curve file", line=1)
    lineno, header = body[0]
    parts = header.split()
    if len(parts) != 2 or parts[0] not in ("planar", "spherical"):
        raise CurveParseError("header must be 'planar N' or 'spherical N'", line=lineno)
    kind = parts[0]
    try:
        n = int(parts[1])
    except ValueError:
        raise CurveParseError(f"bad point count {parts[1]!r}", line=lineno) from None
    dim = 2 if kind == "planar" else 3
    rows = body[1:]
    if len(rows) != n:
        at = rows[n][0] if len(rows) > n else (rows[-1][0] + 1 if rows else lineno + 1)
        raise CurveParseError(f"expected {n} rows, found {len(rows)}", line=at)
    pts = np.empty((n, dim))
    for j, (ln, text) in enumerate(rows):
        vals = text.split()
        if len(vals) != dim:
            raise CurveParseError(f"expected {dim} coordinates, got {len(vals)}", line=ln)
        try:
            pts[j] = [float(v) for v in vals]
        except ValueError:
            raise CurveParseError(f"non-numeric coordinate in {text!r}", line=ln) from None
    if not np.all(np.isfinite(pts)):
        bad = rows[int(np.argwhere(~np.isfinite(pts))[0, 0])][0]
        raise CurveParseError("non-finite coordinate", line=bad)
    return PlanarCurve(pts, kind=kind)


def write_curve_file(path, curve: PlanarCurve):
    with open(path, "w") as fh:
        fh.write(f"{curve.kind} {len(curve.points)}\n")
        for row in curve.points:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


class Embedding:
    """Mid-surface map ``r(theta, z)`` with first and second partial derivatives.

    ``derivs(theta, z)`` returns a dict with keys ``r, r_th, r_z, r_thth,
    r_thz, r_zz``; each value has shape ``(3, *shape)``.
    """

    def __init__(self, derivs: Callable, kind: str):
        self._derivs = derivs
        self.kind = kind

    def derivs(self, theta, z):
        theta, z = np.broadcast_arrays(np.asarray(theta, float), np.asarray(z, float))
        return self._derivs(theta, z)

    def frame(self, theta, z):
        """Orthonormal frame (e_t = outward normal, e_theta, e_z)."""
        d = self.derivs(theta, z)
        e_th = d["r_th"] / np.linalg.norm(d["r_th"], axis=0)
        e_z = d["r_z"] / np.linalg.norm(d["r_z"], axis=0)
        n = np.cross(e_th, e_z, axis=0)
        return n, e_th, e_z

    def frame_with_derivatives(self, theta, z):
        """Frame vectors and their theta- and z-derivatives.

        Returns ``(E, dE_th, dE_z)``, each of shape ``(3 vectors, 3 coords, ...)``.
        """
        d = self.derivs(theta, z)

        def unit(v, dv):
            nv = np.linalg.norm(v, axis=0)
            e = v / nv
            return e, (dv - e * np.einsum("i...,i...->...", e, dv)) / nv

        e_th, e_th_th = unit(d["r_th"], d["r_thth"])
        _, e_th_z = unit(d["r_th"], d["r_thz"])
        e_z, e_z_th = unit(d["r_z"], d["r_thz"])
        _, e_z_z = unit(d["r_z"], d["r_zz"])
        n = np.cross(e_th, e_z, axis=0)
        n_th = np.cross(e_th_th, e_z, axis=0) + np.cross(e_th, e_z_th, axis=0)
        n_z = np.cross(e_th_z, e_z, axis=0) + np.cross(e_th, e_z_z, axis=0)
        E = np.stack([n, e_th, e_z])
        return E, np.stack([n_th, e_th_th, e_z_th]), np.stack([n_z, e_th_z, e_z_z])

    @classmethod
    def cylinder(cls, curve: ArclengthCurve):
        def derivs(theta, z):
            g0, g1, g2 = (curve.eval(theta, k) for k in range(3))
            zero = np.zeros_like(z)
            one = np.ones_like(z)
            return {
                "r": np.stack([g0[0], g0[1], z]),
                "r_th": np.stack([g1[0], g1[1], zero]),
                "r_z": np.stack([zero, zero, one]),
                "r_thth": np.stack([g2[0], g2[1], zero]),
                "r_thz": np.zeros((3,) + z.shape),
                "r_zz": np.zeros((3,) + z.shape),
            }

        return cls(derivs, "cylinder")

    @classmethod
    def cone(cls, curve: ArclengthCurve):
        def derivs(theta, z):
            s0, s1, s2 = (curve.eval(theta, k) for k in range(3))
            return {
                "r": z * s0,
                "r_th": z * s1,
                "r_z": s0,
                "r_thth": z * s2,
                "r_thz": s1,
                "r_zz": np.zeros((3,) + z.shape),
            }

        return cls(derivs, "cone")


# ---------------------------------------------------------------------------
# surfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroGaussSurface:
    B: Profile1D
    a: Profile1D
    b: Profile1D
    c: Profile1D
    p: float
    z_range: tuple
    embedding: Optional[Embedding] = None
    name: str = "surface"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def L_minus(self):
        return self.z_range[0]

    @property
    def L_plus(self):
        return self.z_range[1]

    @property
    def length(self):
        return self.z_range[1] - self.z_range[0]

    def wrap(self, theta):
        return np.mod(np.asarray(theta, dtype=float), self.p)

    def A_z(self, z):
        return self.B.d(z, 1)

    def A_theta(self, theta, z):
        theta = self.wrap(theta)
        return self.a(theta) * self.B(z) + self.b(theta)

    def kappa_theta(self, theta, z):
        return self.c(self.wrap(theta)) / self.A_theta(theta, z)

    def c_range(self, n=1024):
        th = np.arange(n) * (self.p / n)
        cv = self.c(th)
        return float(cv.min()), float(cv.max())

    def A_theta_min(self, n_theta=256, n_z=64):
        th, z = _validation_grid(self, n_theta, n_z)
        return float(self.A_theta(th, z).min())

    @property
    def uniformly_convex(self) -> bool:
        return self.c_range()[0] > 0

    def is_embedded(self):
        return self.embedding is not None


def _validation_grid(s, n_theta, n_z):
    th = np.arange(n_theta) * (s.p / n_theta)
    z = np.linspace(s.z_range[0], s.z_range[1], n_z)
    return np.meshgrid(th, z, indexing="ij")


def _check_periodic(prof: Profile1D, p: float, name: str, rng):
    if prof.period is not None and math.isclose(prof.period, p, rel_tol=1e-12):
        return prof
    x = rng.uniform(0.0, p, 64)
    raw = Profile1D(prof.derivs, None, prof.expr, prof.degree, prof.label)
    dev = np.max(np.abs(raw(x + p) - raw(x)))
    if not np.isfinite(dev) or dev > 1e-10:
        raise NonPeriodic(f"profile {name} is not {p}-periodic (deviation {dev:.3g})")
    return Profile1D(prof.derivs, p, prof.expr, prof.degree, prof.label)


def build_surface(B, a, b, c, p, z_range, embedding=None, name="surface",
                  n_theta=256, n_z=64) -> ZeroGaussSurface:
    """Validate profiles and return the surface they generate."""
    if not p > 0:
        raise GeometryError("period p must be positive")
    lo, hi = float(z_range[0]), float(z_range[1])
    if not hi > lo:
        raise GeometryError("z_range must be a nondegenerate interval")
    rng = np.random.default_rng(0)
    B = _as_profile(B)
    a, b, c = (_check_periodic(_as_profile(f), p, n, rng) for f, n in ((a, "a"), (b, "b"), (c, "c")))
    s = ZeroGaussSurface(B, a, b, c, float(p), (lo, hi), embedding, name)
    th, z = _validation_grid(s, n_theta, n_z)
    Az = s.A_z(z)
    At = s.A_theta(th, z)
    for label, arr in (("A_z", Az), ("A_theta", At), ("c", c(th[:, 0]))):
        if not np.all(np.isfinite(arr)):
            raise GeometryError(f"{label} is not finite on the validation grid")
    if np.any(Az <= 0):
        raise PositivityViolation(f"A_z = B'(z) <= 0 somewhere on z in [{lo}, {hi}]")
    if np.any(At <= 0):
        i = np.unravel_index(np.argmin(At), At.shape)
        raise PositivityViolation(
            f"A_theta = a B + b <= 0 at theta={th[i]:.4g}, z={z[i]:.4g} (value {At[i]:.4g})")
    return s


def cylinder_from_curve(curve, z_range=(0.0, 1.0), name="cylinder") -> ZeroGaussSurface:
    """Cylinder r = Gamma(theta) + z e_z over a closed planar curve."""
    if isinstance(curve, PlanarCurve):
        if curve.kind != "planar":
            raise GeometryError("cylinder_from_curve needs a planar curve")
        curve = curve.reparametrize()
    c = curve.curvature_profile()
    return build_surface(
        Profile1D.from_expr("x", var="x"), 0, 1, c, curve.length, z_range,
        embedding=Embedding.cylinder(curve), name=name)


def cone_from_curve(curve, z_range=(1.0, 2.0), name="cone") -> ZeroGaussSurface:
    """Cone r = z sigma(theta) over a closed curve on the unit sphere."""
    lo, hi = z_range
    if lo <= 0.0 <= hi:
        raise ApexIncluded(f"z_range {z_range} contains the apex z=0")
    if isinstance(curve, PlanarCurve):
        if curve.kind != "spherical":
            raise GeometryError("cone_from_curve needs a spherical curve")
        curve = curve.reparametrize()
    c = curve.curvature_profile()
    return build_surface(
        Profile1D.from_expr("x", var="x"), 1, 0, c, curve.length, z_range,
        embedding=Embedding.cone(curve), name=name)


def metric_at(s: ZeroGaussSurface, theta, z):
    """Return ``(A_z, A_theta, kappa_theta)`` at ``(theta mod p, z)``."""
    z = np.asarray(z, dtype=float)
    lo, hi = s.z_range
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(z < lo - tol) or np.any(z > hi + tol):
        raise OutOfDomain(f"z outside [{lo}, {hi}]")
    th = s.wrap(theta)
    At = s.A_theta(th, z)
    Az = s.A_z(z)
    return Az, At, s.c(th) / At


def embed_point(s: ZeroGaussSurface, t, theta, z):
    """Point ``r + t n`` and the frame ``(e_t, e_theta, e_z)`` there."""
    if s.embedding is None:
        raise NoEmbedding(f"surface {s.name!r} has no 3D embedding")
    th = s.wrap(theta)
    t, th, z = np.broadcast_arrays(np.asarray(t, float), th, np.asarray(z, float))
    d = s.embedding.derivs(th, z)
    n, e_th, e_z = s.embedding.frame(th, z)
    return d["r"] + t * n, (n, e_th, e_z)


def _intrinsic_quantities(s: ZeroGaussSurface):
    """Callables of (theta, z): A_z, A_theta, kappa_z, kappa_theta, A_z,theta, A_theta,z."""
    if s.embedding is None:
        zeros = lambda th, z: np.zeros(np.broadcast(th, z).shape)
        return (
            lambda th, z: s.A_z(z) + 0.0 * th,
            s.A_theta,
            zeros,
            s.kappa_theta,
            zeros,
            lambda th, z: s.a(s.wrap(th)) * s.B.d(z, 1),
        )
    emb = s.embedding

    def quantities(th, z):
        d = emb.derivs(th, z)
        At = np.linalg.norm(d["r_th"], axis=0)
        Az = np.linalg.norm(d["r_z"], axis=0)
        e_th, e_z = d["r_th"] / At, d["r_z"] / Az
        n = np.cross(e_th, e_z, axis=0)
        dot = lambda u, v: np.einsum("i...,i...->...", u, v)
        return (Az, At, -dot(n, d["r_zz"]) / Az**2, -dot(n, d["r_thth"]) / At**2,
                dot(e_z, d["r_thz"]), dot(e_th, d["r_thz"]))

    return tuple((lambda th, z, k=k: quantities(th, z)[k]) for k in range(6))


def _fd(f, h):
    """Fourth-order central difference operator along one argument."""
    return lambda x: (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def codazzi_gauss_residual(s: ZeroGaussSurface, n_samples: int = 32):
    """Max residuals of the Codazzi and Gauss relations on an n x n grid.

    Metric coefficients and curvatures come from the embedding when there is
    one (so the check is independent of the profile formulas), otherwise
    from the profiles with kappa_z = 0.  Outer derivatives use fourth-order
    central differences.
    """
    Az, At, kz, kt, Az_th, At_z = _intrinsic_quantities(s)
    lo, hi = s.z_range
    L = hi - lo
    th = np.arange(n_samples) * (s.p / n_samples)
    zz = lo + (np.arange(n_samples) + 0.5) * (L / n_samples)
    TH, ZZ = np.meshgrid(th, zz, indexing="ij")
    dth = 1e-3 * s.p / (2 * np.pi)
    dz = 1e-3 * L

    def d_th(f):
        return lambda th_, z_: _fd(lambda x: f(x, z_), dth)(th_)

    def d_z(f):
        return lambda th_, z_: _fd(lambda x: f(th_, x), dz)(z_)

    r1 = d_th(kz)(TH, ZZ) - (kt(TH, ZZ) - kz(TH, ZZ)) * Az_th(TH, ZZ) / Az(TH, ZZ)
    r2 = d_z(kt)(TH, ZZ) - (kz(TH, ZZ) - kt(TH, ZZ)) * At_z(TH, ZZ) / At(TH, ZZ)
    g = (d_z(lambda a, b: At_z(a, b) / Az(a, b))(TH, ZZ)
         + d_th(lambda a, b: Az_th(a, b) / At(a, b))(TH, ZZ)
         + Az(TH, ZZ) * At(TH, ZZ) * kz(TH, ZZ) * kt(TH, ZZ))
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2)))), float(np.max(np.abs(g)))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_S = sp.Symbol("s", real=True)


def circle_curve(radius=1.0) -> AnalyticCurve:
    R = sp.nsimplify(radius)
    return AnalyticCurve([R * sp.cos(_S / R), R * sp.sin(_S / R)], _S, 2 * math.pi * float(R))


def spherical_circle(colatitude=math.pi / 4) -> AnalyticCurve:
    al = sp.nsimplify(colatitude / math.pi) * sp.pi
    sn, cn = sp.sin(al), sp.cos(al)
    exprs = [sn * sp.cos(_S / sn), sn * sp.sin(_S / sn), cn]
    return AnalyticCurve(exprs, _S, 2 * math.pi * math.sin(colatitude), kind="spherical")


def circular_cylinder(radius=1.0, length=1.0) -> ZeroGaussSurface:
    curve = circle_curve(radius)
    c = Profile1D.constant(1.0 / radius, period=curve.length)
    return build_surface(Profile1D.from_expr("x"), 0, 1, c, curve.length, (0.0, float(length)),
                         embedding=Embedding.cylinder(curve), name="cylinder-circular")


def ellipse_points(ax=2.0, ay=1.0, n=2048):
    u = np.arange(n) * (2 * np.pi / n)
    return PlanarCurve(np.column_stack([ax * np.cos(u), ay * np.sin(u)]))


def ellipse_cylinder(ax=2.0, ay=1.0, n=2048, length=1.0) -> ZeroGaussSurface:
    s = cylinder_from_curve(ellipse_points(ax, ay, n), (0.0, float(length)), name="cylinder-ellipse")
    return s


def cone_circle(colatitude=math.pi / 4, zmin=1.0, zmax=2.0) -> ZeroGaussSurface:
    return cone_from_curve(spherical_circle(colatitude), (float(zmin), float(zmax)), name="cone-circle")


def flat_patch_curvature(p=2 * math.pi):
    """Curvature K max(0, cos(4 pi s / p))^3: C^2, convex, zero on two arcs.

    Half-period symmetry closes the curve; K normalizes total turning to 2 pi.
    """
    x = sp.Symbol("x", real=True)
    P = sp.nsimplify(p / math.pi) * sp.pi / 2
    K = 3 * sp.pi**2 / (2 * P)
    arg = 2 * sp.pi * x / P
    expr = sp.Piecewise((K * sp.cos(arg) ** 3, sp.cos(arg) > 0), (0, True))
    return Profile1D.from_expr(expr, var=x, period=p, label="flat-patch curvature")


def flat_patch_arcs(p=2 * math.pi):
    """Arc-length intervals on which the flat-patch curvature vanishes."""
    P = p / 2
    return [(P / 4, 3 * P / 4), (P + P / 4, P + 3 * P / 4)]


def cylinder_flat_patch(length=1.0, p=2 * math.pi, n=4096) -> ZeroGaussSurface:
    """Convex cylinder whose cross-section has two straight segments."""
    c = flat_patch_curvature(p)
    fine = 64 * n
    s = np.linspace(0.0, p, fine + 1)
    turn = np.pi / 2 + cumulative_simpson(c(s), x=s, initial=0.0)
    gx = cumulative_simpson(np.cos(turn), x=s, initial=0.0)
    gy = cumulative_simpson(np.sin(turn), x=s, initial=0.0)
    step = fine // n
    pts = np.column_stack([gx[:-1:step], gy[:-1:step]])
    pts -= pts.mean(axis=0)
    curve = PlanarCurve(pts).reparametrize()
    return build_surface(Profile1D.from_expr("x"), 0, 1, c, p, (0.0, float(length)),
                         embedding=Embedding.cylinder(curve), name="cylinder-flat-patch")


def parse_preset(spec: str) -> ZeroGaussSurface:
    """Build a named preset such as ``cylinder-circular radius=1 length=1``."""
    parts = spec.split()
    if not parts:
        raise GeometryError("empty surface preset")
    name, kw = parts[0], {}
    for item in parts[1:]:
        if "=" not in item:
            raise GeometryError(f"preset argument {item!r} is not key=value")
        k, v = item.split("=", 1)
        try:
            kw[k] = float(v)
        except ValueError:
            raise GeometryError(f"preset argument {item!r} is not numeric") from None
    builders = {
        "cylinder-circular": (circular_cylinder, {"radius", "length"}),
        "cylinder-ellipse": (ellipse_cylinder, {"ax", "ay", "n", "length"}),
        "cone-circle": (cone_circle, {"colatitude", "zmin", "zmax"}),
        "cylinder-flat-patch": (cylinder_flat_patch, {"length"}),
    }
    if name not in builders:
        raise GeometryError(f"unknown preset {name!r}")
    fn, allowed = builders[name]
    extra = set(kw) - allowed
    if extra:
        raise GeometryError(f"preset {name!r} does not take {sorted(extra)}")
    if "n" in kw:
        kw["n"] = int(kw["n"])
    return fn(**kw)
