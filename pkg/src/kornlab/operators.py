"""Curvilinear gradients, strain norms and Korn functionals on the shell.

Frame tensors are arrays of shape ``(3, 3, ...)`` indexed ``[row, col]`` in the
order ``(t, theta, z)``: row = displacement component, column = direction of
differentiation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp

from ._symbolic import TH, T, Z, lambdify_fields
from .errors import DegenerateMetric, NoEmbedding, UnresolvedOscillation, ZeroField
from .geometry import ZeroGaussSurface, embed_point

BC_TAGS = ("V1", "V2", "V3", "PeriodicOnly")


@dataclass
class DisplacementField:
    """Displacement ``(u_t, u_theta, u_z)`` in frame components.

    ``func(t, theta, z)`` returns ``(values, jac)`` with shapes ``(3, ...)``
    and ``(3, 3, ...)``; ``jac[i, j]`` is the partial derivative of component
    ``i`` with respect to coordinate ``j`` of ``(t, theta, z)``.
    """

    func: Callable
    bc_tag: Optional[str] = None
    wavenumber: float = 0.0
    label: str = ""
    meta: dict = field(default_factory=dict)

    def evaluate(self, t, theta, z):
        t, theta, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, theta, z)))
        return self.func(t, theta, z)

    def __call__(self, t, theta, z):
        return self.evaluate(t, theta, z)[0]

    def __add__(self, other):
        def f(t, th, z):
            v1, j1 = self.func(t, th, z)
            v2, j2 = other.func(t, th, z)
            return v1 + v2, j1 + j2

        return DisplacementField(f, wavenumber=max(self.wavenumber, other.wavenumber),
                                 label=f"({self.label})+({other.label})")

    def __rmul__(self, alpha):
        def f(t, th, z):
            v, j = self.func(t, th, z)
            return alpha * v, alpha * j

        return DisplacementField(f, self.bc_tag, self.wavenumber, f"{alpha}*({self.label})")

    @classmethod
    def zero(cls):
        def f(t, th, z):
            return np.zeros((3,) + t.shape), np.zeros((3, 3) + t.shape)

        return cls(f, label="0")

    @classmethod
    def from_sympy(cls, exprs, surface=None, bc_tag=None, wavenumber=0.0, label=""):
        """Closed-form field from sympy expressions in ``t, theta, z``.

        Expressions may contain the surface profile functions ``a(theta)``,
        ``b(theta)``, ``c(theta)``, ``B(z)``; pass ``surface`` to bind them.
        """
        exprs = [sp.sympify(e) for e in exprs]
        flat = list(exprs) + [sp.diff(e, v) for e in exprs for v in (T, TH, Z)]
        fn = lambdify_fields(flat, (T, TH, Z), surface)

        def f(t, th, z):
            out = fn(t, th, z)
            vals = np.stack(out[:3])
            jac = np.stack(out[3:]).reshape((3, 3) + vals.shape[1:])
            return vals, jac

        return cls(f, bc_tag, wavenumber, label or str(exprs), meta={"exprs": exprs})


# ---------------------------------------------------------------------------
# sampled fields
# ---------------------------------------------------------------------------


def _d_periodic4(v, dx, axis):
    r = lambda k: np.roll(v, -k, axis=axis)
    return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * dx)


def _d_interval4(v, dx, axis):
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * dx)
    out[1] = (v[2] - v[0]) / (2 * dx)
    out[-2] = (v[-1] - v[-3]) / (2 * dx)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dx)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * dx)
    return np.moveaxis(out, 0, axis)


class SampledField(DisplacementField):
    """Field sampled on a tensor grid; derivatives by finite differences.

    Fourth-order central differences in theta (periodic) and z, second-order
    one-sided at the z ends, exact differences in t for fields affine in t.
    Evaluation is only defined at grid nodes.
    """

    def __init__(self, t, theta, z, values, bc_tag=None, wavenumber=0.0):
        self.t = np.asarray(t, float)
        self.theta = np.asarray(theta, float)
        self.z = np.asarray(z, float)
        self.values = np.asarray(values, float)
        dth = self.theta[1] - self.theta[0]
        dz = self.z[1] - self.z[0]
        jac = np.empty((3, 3) + self.values.shape[1:])
        jac[:, 0] = np.gradient(self.values, self.t, axis=1) if len(self.t) > 1 else 0.0
        jac[:, 1] = _d_periodic4(self.values, dth, axis=2)
        jac[:, 2] = _d_interval4(self.values, dz, axis=3)
        self.jac = jac
        super().__init__(self._lookup, bc_tag, wavenumber, "sampled")

    @classmethod
    def from_field(cls, u: DisplacementField, t, theta, z):
        TT, HH, ZZ = np.meshgrid(t, theta, z, indexing="ij")
        return cls(t, theta, z, u.evaluate(TT, HH, ZZ)[0], u.bc_tag, u.wavenumber)

    def _index(self, nodes, x):
        i = np.searchsorted(nodes, x - 1e-12 * (1 + np.abs(x)))
        i = np.clip(i, 0, len(nodes) - 1)
        if np.any(np.abs(nodes[i] - x) > 1e-9 * (1 + np.abs(x))):
            raise ValueError("sampled fields can only be evaluated at grid nodes")
        return i

    def _lookup(self, t, th, z):
        i, j, k = self._index(self.t, t), self._index(self.theta, th), self._index(self.z, z)
        return self.values[:, i, j, k], self.jac[:, :, i, j, k]


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def grad_from_jet(s: ZeroGaussSurface, vals, jac, t, theta, z, kind="full"):
    """Frame gradient from component values and coordinate partials."""
    th = s.wrap(theta)
    a = s.a(th)
    c = s.c(th)
    At = s.A_theta(th, z)
    Az = s.A_z(z)
    if kind == "full":
        den = At + t * c
    elif kind == "simplified":
        den = At + 0.0 * t
    else:
        raise ValueError(f"unknown gradient kind {kind!r}")
    if np.any(den <= 0):
        raise DegenerateMetric("A_theta + t c <= 0: shell too thick for its curvature")
    ut, uth, uz = vals
    G = np.empty((3, 3) + np.shape(den))
    G[:, 0] = jac[:, 0]
    G[0, 1] = (jac[0, 1] - c * uth) / den
    G[1, 1] = (jac[1, 1] + c * ut + a * uz) / den
    G[2, 1] = (jac[2, 1] - a * uth) / den
    G[:, 2] = jac[:, 2] / Az
    return G


def gradient(s: ZeroGaussSurface, u: DisplacementField, point, kind="full"):
    """Full (exact) or simplified curvilinear gradient of ``u`` at ``point``."""
    t, th, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in point))
    vals, jac = u.evaluate(t, th, z)
    return grad_from_jet(s, vals, jac, t, th, z, kind)


def sym_part(T):
    T = np.asarray(T, dtype=float)
    return 0.5 * (T + np.swapaxes(T, 0, 1))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre in t, trapezoid in theta, Gauss-Legendre panels in z."""

    n_t: int = 4
    n_theta: int = 128
    z_panels: int = 16
    z_nodes: int = 4

    def nodes(self, s: ZeroGaussSurface, h: float):
        xt, wt = np.polynomial.legendre.leggauss(self.n_t)
        t, wt = 0.5 * h * xt, 0.5 * h * wt
        th = np.arange(self.n_theta) * (s.p / self.n_theta)
        wth = np.full(self.n_theta, s.p / self.n_theta)
        xz, wz = np.polynomial.legendre.leggauss(self.z_nodes)
        edges = np.linspace(s.z_range[0], s.z_range[1], self.z_panels + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        z = (mid[:, None] + half[:, None] * xz[None, :]).ravel()
        wz = (half[:, None] * wz[None, :]).ravel()
        return t, wt, th, wth, z, wz


@dataclass(frozen=True)
class NormBundle:
    grad_full_sq: float
    sym_full_sq: float
    grad_simp_sq: float
    sym_simp_sq: float
    ut_sq: float
    utheta_sq: float
    uz_sq: float


def energy_norms(s: ZeroGaussSurface, u: DisplacementField, h: float,
                 q: Optional[QuadratureSpec] = None) -> NormBundle:
    """Squared L2 norms with the A_z A_theta weight over the shell of thickness h."""
    if not 0 < h < 1:
        raise ValueError("thickness h must lie in (0, 1)")
    q = q or QuadratureSpec()
    if u.wavenumber and q.n_theta < 8 * u.wavenumber:
        warnings.warn(
            f"{q.n_theta} theta nodes resolve wavenumber {u.wavenumber} with fewer than 8 per period",
            UnresolvedOscillation, stacklevel=2)
    t, wt, th, wth, z, wz = q.nodes(s, h)
    cmax = np.max(np.abs(s.c(th)))
    if h * cmax >= 2 * s.A_theta_min():
        raise DegenerateMetric(f"h * max|c| = {h * cmax:.3g} >= 2 min A_theta")
    acc = np.zeros(7)
    TT, HH = np.meshgrid(t, th, indexing="ij")
    W2 = np.outer(wt, wth)
    # z-slabs in a fixed order keep the reduction deterministic
    for k in range(len(z)):
        zk = np.full_like(TT, z[k])
        vals, jac = u.evaluate(TT, HH, zk)
        w = W2 * wz[k] * s.A_z(zk) * s.A_theta(HH, zk)
        Gf = grad_from_jet(s, vals, jac, TT, HH, zk, "full")
        Gs = grad_from_jet(s, vals, jac, TT, HH, zk, "simplified")
        acc += [
            np.sum(w * np.sum(Gf**2, axis=(0, 1))),
            np.sum(w * np.sum(sym_part(Gf) ** 2, axis=(0, 1))),
            np.sum(w * np.sum(Gs**2, axis=(0, 1))),
            np.sum(w * np.sum(sym_part(Gs) ** 2, axis=(0, 1))),
            np.sum(w * vals[0] ** 2),
            np.sum(w * vals[1] ** 2),
            np.sum(w * vals[2] ** 2),
        ]
    return NormBundle(*(float(x) for x in acc))


def korn_functionals(s, u, h, q=None):
    """Rayleigh quotients (full, simplified) and the first-and-a-half ratio."""
    nb = energy_norms(s, u, h, q)
    if nb.grad_full_sq == 0 or nb.grad_simp_sq == 0:
        raise ZeroField("gradient norm vanishes")
    q_full = nb.sym_full_sq / nb.grad_full_sq
    q_simp = nb.sym_simp_sq / nb.grad_simp_sq
    e = np.sqrt(nb.sym_simp_sq)
    r_15 = nb.grad_simp_sq / (np.sqrt(nb.ut_sq) * e / h + nb.sym_simp_sq)
    return q_full, q_simp, r_15


# ---------------------------------------------------------------------------
# rigid motions and Cartesian cross-check
# ---------------------------------------------------------------------------


def rigid_motion_field(s: ZeroGaussSurface, A, b) -> DisplacementField:
    """Frame components of the infinitesimal motion ``x -> A x + b``."""
    if s.embedding is None:
        raise NoEmbedding(f"surface {s.name!r} has no 3D embedding")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.max(np.abs(A + A.T)) > 1e-14 * (1 + np.abs(A).max()):
        raise ValueError("A must be skew-symmetric")
    emb = s.embedding

    def f(t, th, z):
        th = s.wrap(th)
        d = emb.derivs(th, z)
        E, E_th, E_z = emb.frame_with_derivatives(th, z)
        n, n_th, n_z = E[0], E_th[0], E_z[0]
        x = d["r"] + t * n
        x_th = d["r_th"] + t * n_th
        x_z = d["r_z"] + t * n_z
        Ax = lambda v: np.einsum("ij,j...->i...", A, v)
        U = Ax(x) + b.reshape((3,) + (1,) * t.ndim)
        dot = lambda P, v: np.einsum("ki...,i...->k...", P, v)
        vals = dot(E, U)
        jac = np.stack([dot(E, Ax(n)), dot(E_th, U) + dot(E, Ax(x_th)),
                        dot(E_z, U) + dot(E, Ax(x_z))], axis=1)
        return vals, jac

    return DisplacementField(f, label="rigid")


def rigid_motion_basis():
    """Three translations followed by three rotations, as (A, b) pairs."""
    out = []
    for k in range(3):
        b = np.zeros(3)
        b[k] = 1.0
        out.append((np.zeros((3, 3)), b))
    for k in range(3):
        w = np.zeros(3)
        w[k] = 1.0
        A = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
        out.append((A, np.zeros(3)))
    return out


def cartesian_consistency(s: ZeroGaussSurface, u: DisplacementField, point, eps=1e-5):
    """Relative Frobenius error between the full gradient and a Cartesian Jacobian.

    The Cartesian Jacobian of the push-forward ``U = sum_i u_i e_i`` is built
    by central differences of step ``eps`` in each coordinate through
    ``embed_point``, so it is independent of the curvilinear formula.
    """
    if s.embedding is None:
        raise NoEmbedding(f"surface {s.name!r} has no 3D embedding")
    q0 = np.array(point, dtype=float)

    def push(q):
        x, frame = embed_point(s, q[0], q[1], q[2])
        vals = u.evaluate(q[0], q[1], q[2])[0]
        U = sum(vals[i] * frame[i] for i in range(3))
        return np.asarray(x, float).reshape(3), np.asarray(U, float).reshape(3)

    dX = np.empty((3, 3))
    dU = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = eps
        xp, Up = push(q0 + e)
        xm, Um = push(q0 - e)
        dX[:, j] = (xp - xm) / (2 * eps)
        dU[:, j] = (Up - Um) / (2 * eps)
    J = dU @ np.linalg.inv(dX)
    _, frame = embed_point(s, q0[0], q0[1], q0[2])
    Q = np.column_stack([np.asarray(f, float).reshape(3) for f in frame])
    F = Q.T @ J @ Q
    G = gradient(s, u, tuple(q0), "full").reshape(3, 3)
    # A constant Cartesian field has G = 0 exactly, so the error is measured
    # against |G| floored by the field size over the local radius.
    vals = np.asarray(u.evaluate(q0[0], q0[1], q0[2])[0], float).reshape(3)
    floor = np.linalg.norm(vals) / float(s.A_theta(q0[1], q0[2]))
    scale = max(np.linalg.norm(G), floor)
    err = np.linalg.norm(F - G)
    return float(err / scale) if scale > 0 else float(err)
