"""Two-dimensional Korn-type machinery on the strip R_h = (-h/2, h/2) x (0, p).

Contains the weighted gradient pair

    G = [[u_x, a1 u_y + b1 v], [v_x, a2 v_y + b2 u]],   E = (G + G^T) / 2,

the first-and-a-half ratio in its periodic and Dirichlet variants, the
five-point harmonic extension of boundary data and the sharp harmonic
inequality gap ``||w_y||^2 <= (2 sqrt 3 / h) ||w|| ||w_x|| + ||w_x||^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
import sympy as sp

from ._symbolic import X, Y, lambdify_fields
from .errors import CoeffVanishes, NonConvergence, NotHarmonic, VariantViolation, ZeroDenominator

VARIANTS = ("periodic", "dirichlet")


def _coeff(v):
    if callable(v):
        return v
    if isinstance(v, (int, float)):
        return lambda y, v=float(v): np.full_like(np.asarray(y, dtype=float), v)
    expr = sp.sympify(v)
    fn = lambdify_fields([expr], (Y,))
    return lambda y: fn(y)[0]


@dataclass
class PlanarCoeffs:
    """Coefficients a1, b1, a2, b2 of y; numbers, sympy strings or callables."""

    a1: object = 1.0
    b1: object = 0.0
    a2: object = 1.0
    b2: object = 0.0

    def __post_init__(self):
        self._fns = tuple(_coeff(v) for v in (self.a1, self.b1, self.a2, self.b2))

    def __call__(self, y):
        return tuple(f(y) for f in self._fns)

    @classmethod
    def shell(cls, alpha, kappa):
        """The (alpha, -kappa, alpha, kappa) specialization of the theta-t cross-section."""
        k = _coeff(kappa)
        return cls(alpha, lambda y: -k(y), alpha, kappa)


@dataclass
class PlanarField:
    """Displacement phi = (u, v) on R_h.

    ``func(x, y)`` returns ``(vals, jac)`` with shapes ``(2, ...)`` and
    ``(2, 2, ...)``; ``jac[i, 0]`` is the x-derivative and ``jac[i, 1]`` the
    y-derivative of component ``i``.  For the Dirichlet variant ``l`` is the
    level where ``v(x, l) = 0``.
    """

    func: Callable
    p: float
    variant: str = "periodic"
    l: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "dirichlet" and self.l is None:
            self.l = 0.0

    def evaluate(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.func(x, y)

    @classmethod
    def from_sympy(cls, u, v, p, variant="periodic", l=None, **meta):
        exprs = [sp.sympify(u), sp.sympify(v)]
        flat = exprs + [sp.diff(e, s) for e in exprs for s in (X, Y)]
        fn = lambdify_fields(flat, (X, Y))

        def f(x, y):
            out = fn(x, y)
            return np.stack(out[:2]), np.stack(out[2:]).reshape((2, 2) + x.shape)

        return cls(f, float(p), variant, l, dict(meta, exprs=tuple(exprs)))

    def check_variant(self, h, n=33, tol=1e-10):
        """Verify the declared boundary condition at sampled boundary points."""
        x = np.linspace(-h / 2, h / 2, n)
        if self.variant == "periodic":
            v0, _ = self.evaluate(x, np.zeros_like(x))
            v1, _ = self.evaluate(x, np.full_like(x, self.p))
            err = np.max(np.abs(v0[0] - v1[0]))
        else:
            v, _ = self.evaluate(x, np.full_like(x, self.l))
            err = np.max(np.abs(v[1]))
        if err > tol:
            raise VariantViolation(f"{self.variant} condition violated by {err:.3e}")
        return err


@dataclass
class PlanarQuadrature:
    """Gauss-Legendre tensor rule on R_h: ``n_x`` points across, panels along y."""

    h: float
    p: float
    n_x: int = 8
    y_panels: int = 32
    y_nodes: int = 8

    def nodes(self):
        gx, wx = np.polynomial.legendre.leggauss(self.n_x)
        x, wx = 0.5 * self.h * gx, 0.5 * self.h * wx
        gy, wy = np.polynomial.legendre.leggauss(self.y_nodes)
        e = np.linspace(0.0, self.p, self.y_panels + 1)
        mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * np.diff(e)
        y = (mid[:, None] + half[:, None] * gy).ravel()
        wy = (half[:, None] * wy).ravel()
        Xg, Yg = np.meshgrid(x, y, indexing="ij")
        return Xg, Yg, np.outer(wx, wy)


@dataclass
class PlanarNorms:
    G_sq: float
    E_sq: float
    u_sq: float
    phi_sq: float


def planar_forms(f: PlanarField, c: PlanarCoeffs, quad: PlanarQuadrature):
    """Return ``(G, E, norms)`` on the quadrature nodes of ``quad``."""
    Xg, Yg, W = quad.nodes()
    a1, b1, a2, b2 = (np.broadcast_to(v, Yg.shape) for v in c(Yg))
    for name, a in (("a1", a1), ("a2", a2)):
        if np.any(a == 0) or np.any(np.sign(a) != np.sign(a.flat[0])):
            raise CoeffVanishes(f"{name} vanishes on [0, p]")
    vals, jac = f.evaluate(Xg, Yg)
    u, v = vals
    G = np.empty((2, 2) + Xg.shape)
    G[0, 0] = jac[0, 0]
    G[0, 1] = a1 * jac[0, 1] + b1 * v
    G[1, 0] = jac[1, 0]
    G[1, 1] = a2 * jac[1, 1] + b2 * u
    E = 0.5 * (G + G.swapaxes(0, 1))
    norms = PlanarNorms(
        G_sq=float(np.sum(W * np.sum(G**2, axis=(0, 1)))),
        E_sq=float(np.sum(W * np.sum(E**2, axis=(0, 1)))),
        u_sq=float(np.sum(W * u**2)),
        phi_sq=float(np.sum(W * (u**2 + v**2))),
    )
    return G, E, norms


def korn15_ratio(f: PlanarField, c: PlanarCoeffs, h: float, quad: Optional[PlanarQuadrature] = None):
    """First-and-a-half ratio; large values would indicate an unbounded constant.

    periodic:  ||G||^2 / (||u|| ||E|| / h + ||E||^2 + ||phi||^2)
    dirichlet: ||G||^2 / (||E|| (||u|| / h + ||E||))
    """
    f.check_variant(h)
    quad = quad or PlanarQuadrature(h, f.p)
    _, _, nm = planar_forms(f, c, quad)
    u, e = math.sqrt(nm.u_sq), math.sqrt(nm.E_sq)
    if f.variant == "periodic":
        den = u * e / h + nm.E_sq + nm.phi_sq
    else:
        den = e * (u / h + e)
    if den <= 0.0:
        raise ZeroDenominator("denominator of the ratio vanishes")
    return nm.G_sq / den


# ---------------------------------------------------------------------------
# random admissible fields
# ---------------------------------------------------------------------------


def random_field(rng: np.random.Generator, p: float, variant="dirichlet", modes=4, degree=2,
                 bending=1.0, noise=0.3):
    """Seeded smooth field: truncated Fourier series in y times polynomials in x.

    The field contains a bending-like pair ``u = g(y)``, ``v = -x g'(y)`` whose
    strain is O(h) smaller than its gradient, plus generic polynomial-Fourier
    terms whose amplitude is drawn log-uniformly in ``[1e-4, 1] * noise`` so
    that some fields are bending dominated.  For the Dirichlet variant ``g`` is a cosine series and every
    ``v``-coefficient a sine series, so ``v(x, 0) = 0``.
    """
    k = 2 * np.pi * np.arange(1, modes + 1) / p
    decay = 1.0 / np.arange(1, modes + 1) ** 2
    g_cos = bending * rng.standard_normal(modes) * decay
    g_sin = np.zeros(modes) if variant == "dirichlet" else bending * rng.standard_normal(modes) * decay
    noise = noise * 10.0 ** rng.uniform(-4.0, 0.0)
    # generic terms: coefficient tensors [power of x, mode, cos/sin]
    cu = noise * rng.standard_normal((degree + 1, modes, 2)) * decay[None, :, None]
    cv = noise * rng.standard_normal((degree + 1, modes, 2)) * decay[None, :, None]
    u0 = noise * rng.standard_normal(degree + 1)
    if variant == "dirichlet":
        cv[:, :, 0] = 0.0

    def series(coef, y, deriv=0):
        # sum_k coef[..., k, 0] cos(k y) + coef[..., k, 1] sin(k y) and its y-derivative
        ky = k * y[..., None]
        cs, sn = np.cos(ky), np.sin(ky)
        if deriv == 0:
            return cs @ coef[..., 0].T + sn @ coef[..., 1].T
        return (-sn * k) @ coef[..., 0].T + (cs * k) @ coef[..., 1].T

    g = np.stack([g_cos, g_sin], axis=-1)

    def f(x, y):
        ky = k * y[..., None]
        gv = np.cos(ky) @ g[:, 0] + np.sin(ky) @ g[:, 1]
        gp = (-np.sin(ky) * k) @ g[:, 0] + (np.cos(ky) * k) @ g[:, 1]
        gpp = (-np.cos(ky) * k**2) @ g[:, 0] + (-np.sin(ky) * k**2) @ g[:, 1]
        Su, Sv = series(cu, y), series(cv, y)
        Su_y, Sv_y = series(cu, y, 1), series(cv, y, 1)
        pw = np.stack([x**j for j in range(degree + 1)], axis=-1)
        dpw = np.stack([j * x ** max(j - 1, 0) for j in range(degree + 1)], axis=-1)
        u = gv + np.sum(pw * Su, axis=-1) + pw @ u0
        v = -x * gp + np.sum(pw * Sv, axis=-1)
        vals = np.stack([u, v])
        jac = np.empty((2, 2) + x.shape)
        jac[0, 0] = np.sum(dpw * Su, axis=-1) + dpw @ u0
        jac[0, 1] = gp + np.sum(pw * Su_y, axis=-1)
        jac[1, 0] = -gp + np.sum(dpw * Sv, axis=-1)
        jac[1, 1] = -x * gpp + np.sum(pw * Sv_y, axis=-1)
        return vals, jac

    return PlanarField(f, float(p), variant, 0.0 if variant == "dirichlet" else None)


def random_fields(seed: int, count: int, p: float, variant="dirichlet", **kw):
    """``count`` fields from independent child streams of ``seed``."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [random_field(np.random.default_rng(ch), p, variant, **kw) for ch in children]


# ---------------------------------------------------------------------------
# harmonic extension and the sharp harmonic inequality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid2:
    """Uniform node grid on the closed strip [-h/2, h/2] x [0, p]."""

    h: float
    p: float
    nx: int
    ny: int

    @property
    def x(self):
        return np.linspace(-self.h / 2, self.h / 2, self.nx)

    @property
    def y(self):
        return np.linspace(0.0, self.p, self.ny)

    @property
    def dx(self):
        return self.h / (self.nx - 1)

    @property
    def dy(self):
        return self.p / (self.ny - 1)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def boundary_mask(self):
        m = np.zeros((self.nx, self.ny), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m


def laplacian5(w, grid: Grid2):
    """Five-point Laplacian at interior nodes, shape ``(nx-2, ny-2)``."""
    return ((w[2:, 1:-1] - 2 * w[1:-1, 1:-1] + w[:-2, 1:-1]) / grid.dx**2
            + (w[1:-1, 2:] - 2 * w[1:-1, 1:-1] + w[1:-1, :-2]) / grid.dy**2)


def harmonic_extension(boundary, grid: Grid2, tol=1e-10, method="direct", maxiter=None):
    """Discrete harmonic function with the given boundary values.

    ``boundary`` is a callable ``g(x, y)`` or an ``(nx, ny)`` array whose
    boundary entries are used.  Returns the full ``(nx, ny)`` node array.
    """
    X_, Y_ = grid.mesh()
    g = boundary(X_, Y_) if callable(boundary) else np.asarray(boundary, dtype=float)
    w = np.array(np.broadcast_to(g, X_.shape), dtype=float)
    mx, my = grid.nx - 2, grid.ny - 2
    if mx <= 0 or my <= 0:
        return w
    ix, iy = 1.0 / grid.dx**2, 1.0 / grid.dy**2
    Lx = sps.diags([ix, -2 * ix, ix], [-1, 0, 1], shape=(mx, mx))
    Ly = sps.diags([iy, -2 * iy, iy], [-1, 0, 1], shape=(my, my))
    A = (sps.kron(Lx, sps.identity(my)) + sps.kron(sps.identity(mx), Ly)).tocsc()
    rhs = np.zeros((mx, my))
    rhs[0, :] -= ix * w[0, 1:-1]
    rhs[-1, :] -= ix * w[-1, 1:-1]
    rhs[:, 0] -= iy * w[1:-1, 0]
    rhs[:, -1] -= iy * w[1:-1, -1]
    b = rhs.ravel()
    if method == "direct":
        sol = spla.spsolve(A, b)
    elif method == "cg":
        sol, info = spla.cg(-A, -b, rtol=tol, maxiter=maxiter)
        if info != 0:
            raise NonConvergence(f"conjugate gradients stopped after {info} iterations")
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(A @ sol - b)
    if res > tol * max(np.linalg.norm(b), 1.0) * 1e3:
        raise NonConvergence(f"Laplace residual {res:.3e} above tolerance")
    w[1:-1, 1:-1] = sol.reshape(mx, my)
    return w


def _simpson_weights(n, d):
    if n % 2 == 0:
        raise ValueError("Simpson weights need an odd number of nodes")
    w = np.ones(n)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return w * d / 3.0


@dataclass
class GapTerms:
    wy_sq: float
    w_sq: float
    wx_sq: float
    gap: float


def _gap_terms(wy_sq, w_sq, wx_sq, h):
    rhs = 2 * math.sqrt(3.0) / h * math.sqrt(w_sq * wx_sq) + wx_sq
    return GapTerms(wy_sq, w_sq, wx_sq, rhs - wy_sq)


def harmonic_gap(w, h: float, p: float, grid: Optional[Grid2] = None, n_x=12, y_panels=64,
                 y_nodes=12, harmonic_tol=1e-8, details=False):
    """RHS minus LHS of the sharp harmonic inequality on R_h.

    ``w`` is either a sympy expression in ``x, y`` (analytic path, Gauss
    quadrature) or an ``(nx, ny)`` node array on ``grid`` (discrete path,
    Simpson quadrature with second-order differences).  Raises NotHarmonic
    when the Laplacian is not small relative to the field.
    """
    if grid is None:
        expr = sp.sympify(w)
        lap = sp.diff(expr, X, 2) + sp.diff(expr, Y, 2)
        fn = lambdify_fields([expr, sp.diff(expr, X), sp.diff(expr, Y), lap], (X, Y))
        quad = PlanarQuadrature(h, p, n_x, y_panels, y_nodes)
        Xg, Yg, W = quad.nodes()
        v, vx, vy, lv = fn(Xg, Yg)
        scale = max(np.max(np.abs(v)), np.max(np.abs(vx)), np.max(np.abs(vy)), 1.0)
        if np.max(np.abs(lv)) > harmonic_tol * scale:
            raise NotHarmonic(f"Laplacian {np.max(np.abs(lv)):.3e} exceeds tolerance")
        terms = _gap_terms(float(np.sum(W * vy**2)), float(np.sum(W * v**2)),
                           float(np.sum(W * vx**2)), h)
    else:
        w = np.asarray(w, dtype=float)
        lv = laplacian5(w, grid)
        scale = max(np.max(np.abs(w)) / min(grid.dx, grid.dy) ** 2, 1.0)
        if lv.size and np.max(np.abs(lv)) > harmonic_tol * scale:
            raise NotHarmonic(f"discrete Laplacian {np.max(np.abs(lv)):.3e} exceeds tolerance")
        wx = np.gradient(w, grid.dx, axis=0, edge_order=2)
        wy = np.gradient(w, grid.dy, axis=1, edge_order=2)
        Wt = np.outer(_simpson_weights(grid.nx, grid.dx), _simpson_weights(grid.ny, grid.dy))
        terms = _gap_terms(float(np.sum(Wt * wy**2)), float(np.sum(Wt * w**2)),
                           float(np.sum(Wt * wx**2)), h)
    return terms if details else terms.gap


def separable_harmonics(p: float, kmax: int = 8):
    """Harmonics admissible for the sharp inequality, with a short label each.

    Periodic in y: cos/sin(k y) times cosh/sinh(k x) for k = 2 pi j / p.
    Vanishing at y = 0 and y = p: sin(k y) times cosh/sinh(k x), k = pi (2j-1) / p.
    Plus the linear harmonic x and a constant.
    """
    out = [("x", X), ("1", sp.Integer(1))]
    for j in range(1, kmax + 1):
        k = 2 * sp.pi * j / sp.nsimplify(p)
        for ty, fy in (("cos", sp.cos), ("sin", sp.sin)):
            for tx, fx in (("cosh", sp.cosh), ("sinh", sp.sinh)):
                out.append((f"{ty}({j}y)*{tx}({j}x)", fy(k * Y) * fx(k * X)))
    for j in range(1, kmax + 1):
        k = sp.pi * (2 * j - 1) / sp.nsimplify(p)
        for tx, fx in (("cosh", sp.cosh), ("sinh", sp.sinh)):
            out.append((f"sin({2 * j - 1}/2 y)*{tx}", sp.sin(k * Y) * fx(k * X)))
    return out
