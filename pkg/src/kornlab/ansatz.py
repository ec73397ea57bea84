"""Optimal displacement fields: Kirchhoff plate ansatz and the shell ansatz.

Shell fields have the form ``u = v(theta, z) + t w(theta, z)``.  The
components of ``v`` and ``w`` are built symbolically from a generating
function ``phi(theta, z)`` so every derivative is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp

from ._symbolic import TH, T, X, Y, Z, lambdify_fields, profile_functions
from .errors import DegenerateCase2, NotSeparable, SupportViolation, ZeroCurvature
from .operators import DisplacementField, sym_part

X3 = sp.Symbol("x3", real=True)


@dataclass
class AnsatzField:
    """Field ``v + t w`` plus the record of how it was generated."""

    v: tuple
    w: tuple
    field: DisplacementField
    generator: dict = field(default_factory=dict)

    @property
    def exprs(self):
        return tuple(vi + T * wi for vi, wi in zip(self.v, self.w))


def n_of_h(h: float) -> int:
    """Oscillation wavenumber: integer part of h^(-1/4)."""
    n = int(math.floor(h ** -0.25))
    # guard against round-off just below an exact integer (h = n^-4)
    if (n + 1) ** 4 * h <= 1.0 + 1e-12:
        n += 1
    return n


def default_Phi(p, z_range):
    """cos(2 pi theta' / p) sin^2(pi (z - L-) / (L+ - L-)) as a function of (theta', z)."""
    lo, hi = (sp.nsimplify(v) for v in z_range)
    thp = sp.Symbol("thetap", real=True)
    k = 2 * sp.pi / _period_symbolic(p)
    return sp.Lambda((thp, Z), sp.cos(k * thp) * sp.sin(sp.pi * (Z - lo) / (hi - lo)) ** 2)


def _period_symbolic(p):
    r = sp.nsimplify(p / math.pi, tolerance=1e-13)
    return r * sp.pi if abs(float(r * sp.pi) - p) < 1e-12 * p else sp.Float(p)


def bump(var, lo, hi, order=6):
    """Compactly supported bump (1 - s^2)^order on (lo, hi); class C^(order-1).

    A polynomial bump keeps every derivative finite on the whole line, unlike
    exp(-1/(1 - s^2)) whose lambdified derivatives overflow at |s| = 1.
    """
    lo, hi = sp.nsimplify(lo), sp.nsimplify(hi)
    s_ = (2 * var - (lo + hi)) / (hi - lo)
    return sp.Piecewise(((1 - s_**2) ** order, sp.Abs(s_) < 1), (0, True))


def oscillating_phi(Phi, h, eta=None):
    """phi^h(theta, z) = eta * Phi(n(h) theta, z); returns ``(phi, n)``."""
    n = n_of_h(h)
    phi = Phi(n * TH, Z)
    if eta is not None:
        phi = eta * phi
    return phi, n


# ---------------------------------------------------------------------------
# plate
# ---------------------------------------------------------------------------


@dataclass
class PlateField:
    """Kirchhoff field on the plate Omega x (-h/2, h/2) in Cartesian coordinates."""

    phi: sp.Expr
    h: float
    exprs: tuple

    def gradient(self, x1, x2, x3):
        fn = lambdify_fields([sp.diff(e, v) for e in self.exprs for v in (X, Y, X3)], (X, Y, X3))
        out = fn(x1, x2, x3)
        return np.stack(out).reshape((3, 3) + np.shape(out[0]))


def kirchhoff_field(phi, h) -> PlateField:
    """u1 = -x3 phi_x1, u2 = -x3 phi_x2, u3 = phi (phi a sympy expression in x, y)."""
    phi = sp.sympify(phi)
    exprs = (-X3 * sp.diff(phi, X), -X3 * sp.diff(phi, Y), phi)
    return PlateField(phi, h, exprs)


def plate_norms(f: PlateField, omega=((0.0, 1.0), (0.0, 1.0)), n=24, panels=4):
    """Quadrature of ||grad u||^2 and ||e(u)||^2 over Omega x (-h/2, h/2)."""
    xg, wg = np.polynomial.legendre.leggauss(n)

    def rule(lo, hi, m):
        edges = np.linspace(lo, hi, m + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        return (mid[:, None] + half[:, None] * xg).ravel(), (half[:, None] * wg).ravel()

    x1, w1 = rule(*omega[0], panels)
    x2, w2 = rule(*omega[1], panels)
    x3, w3 = np.polynomial.legendre.leggauss(4)
    x3, w3 = 0.5 * f.h * x3, 0.5 * f.h * w3
    A, B, C = np.meshgrid(x1, x2, x3, indexing="ij")
    W = w1[:, None, None] * w2[None, :, None] * w3[None, None, :]
    G = f.gradient(A, B, C)
    E = sym_part(G)
    return float(np.sum(W * np.sum(G**2, axis=(0, 1)))), float(np.sum(W * np.sum(E**2, axis=(0, 1))))


def phi_norms(phi, omega=((0.0, 1.0), (0.0, 1.0)), n=24, panels=4):
    """||grad phi||^2 and ||grad grad phi||^2 over Omega (an independent path)."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    edges = [np.linspace(lo, hi, panels + 1) for lo, hi in omega]
    pts = []
    for e in edges:
        mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * np.diff(e)
        pts.append(((mid[:, None] + half[:, None] * xg).ravel(), (half[:, None] * wg).ravel()))
    A, B = np.meshgrid(pts[0][0], pts[1][0], indexing="ij")
    W = np.outer(pts[0][1], pts[1][1])
    g = [sp.diff(phi, X), sp.diff(phi, Y)]
    hh = [sp.diff(phi, X, 2), sp.diff(phi, X, Y), sp.diff(phi, Y, X), sp.diff(phi, Y, 2)]
    vals = lambdify_fields(g + hh, (X, Y))(A, B)
    return (float(np.sum(W * (vals[0] ** 2 + vals[1] ** 2))),
            float(np.sum(W * sum(v**2 for v in vals[2:]))))


def shell_kirchhoff_field(s, phi, bc_tag=None):
    """Kirchhoff field on a flat region of the shell (c = 0, A_theta = A_z = 1 there).

    u_t = phi, u_theta = -t phi_theta, u_z = -t phi_z.
    """
    phi = sp.sympify(phi)
    v = (phi, sp.Integer(0), sp.Integer(0))
    w = (sp.Integer(0), -sp.diff(phi, TH), -sp.diff(phi, Z))
    exprs = [vi + T * wi for vi, wi in zip(v, w)]
    f = DisplacementField.from_sympy(exprs, surface=s, bc_tag=bc_tag, label="kirchhoff")
    return AnsatzField(v, w, f, {"phi": phi, "case": "kirchhoff"})


# ---------------------------------------------------------------------------
# shell ansatz
# ---------------------------------------------------------------------------


def separable_factors(s, tol=1e-10):
    """Return (H, G) with A_z / A_theta = H(theta) / G(z), or raise NotSeparable."""
    th = np.arange(512) * (s.p / 512)
    av, bv = s.a(th), s.b(th)
    a_, b_, c_, B_ = profile_functions()
    na, nb = np.linalg.norm(av), np.linalg.norm(bv)
    if nb > 0:
        lam = float(av @ bv / nb**2)
        if np.linalg.norm(av - lam * bv) <= tol * max(na, nb):
            # a = lam b:  A_theta = b (lam B + 1)
            lam_s = sp.nsimplify(lam, tolerance=1e-12, rational=True)
            return 1 / b_, (lam_s * B_ + 1) / sp.diff(B_, Z), ("a=lam*b", lam)
    if na > 0:
        lam = float(av @ bv / na**2)
        if np.linalg.norm(bv - lam * av) <= tol * max(na, nb):
            lam_s = sp.nsimplify(lam, tolerance=1e-12, rational=True)
            return 1 / a_, (B_ + lam_s) / sp.diff(B_, Z), ("b=lam*a", lam)
    raise NotSeparable("a(theta) and b(theta) are linearly independent")


def _complete(s, vth, vz, generator, wavenumber):
    """Fill v_t and w from (v_theta, v_z) so that E_0 vanishes except zz."""
    a_, b_, c_, B_ = profile_functions()
    At = a_ * B_ + b_
    Az = sp.diff(B_, Z)
    vt = -(sp.diff(vth, TH) + a_ * vz) / c_
    # the tθ entry of the simplified gradient carries -c v_theta, so w_theta
    # must cancel (v_t,theta - c v_theta) / A_theta
    wth = -(sp.diff(vt, TH) - c_ * vth) / At
    wz = -sp.diff(vt, Z) / Az
    v = (vt, vth, vz)
    w = (sp.Integer(0), wth, wz)
    exprs = [vi + T * wi for vi, wi in zip(v, w)]
    f = DisplacementField.from_sympy(exprs, surface=s, wavenumber=wavenumber,
                                     label=generator.get("case", "ansatz"))
    return AnsatzField(v, w, f, generator)


def _check_z_support(s, phi, tol=1e-12):
    fn = lambdify_fields([phi, sp.diff(phi, Z)], (TH, Z))
    th = np.linspace(0, s.p, 97)
    for zend in s.z_range:
        vals = fn(th, np.full_like(th, zend))
        if max(np.max(np.abs(v)) for v in vals) > tol:
            raise SupportViolation(f"phi or phi_z does not vanish at z = {zend}")


def case1_field(s, phi, h=None, wavenumber=0.0):
    """Ansatz for separable metrics (all cylinders and cones)."""
    phi = sp.sympify(phi)
    H, G, how = separable_factors(s)
    _check_c_nonzero(s)
    _check_z_support(s, phi)
    a_, b_, c_, B_ = profile_functions()
    At = a_ * B_ + b_
    vz = At * G * H * sp.diff(phi, Z)
    vth = -At * H**2 * sp.diff(phi, TH)
    gen = {"case": "case1", "phi": phi, "H": H, "G": G, "dependence": how, "h": h}
    return _complete(s, vth, vz, gen, wavenumber)


def _check_c_nonzero(s):
    th = np.arange(1024) * (s.p / 1024)
    if np.any(s.c(th) == 0) or np.min(np.abs(s.c(th))) < 1e-12:
        raise ZeroCurvature("c(theta) vanishes; v_t = -(v_theta,theta + a v_z)/c is undefined")


def case2_field(s, phi, interval, h=None, wavenumber=0.0):
    """Ansatz for non-separable metrics on an interval I where a != 0 and rho' != 0."""
    phi = sp.sympify(phi)
    th1, th2 = interval
    grid = np.linspace(th1, th2, 401)
    av = s.a(grid)
    if np.min(np.abs(av)) < 1e-12:
        raise DegenerateCase2("a vanishes on I")
    rho_p = (s.b.d(grid, 1) * av - s.b(grid) * s.a.d(grid, 1)) / av**2
    if np.min(np.abs(rho_p)) < 1e-8 or (np.min(rho_p) < 0 < np.max(rho_p)):
        raise DegenerateCase2("rho' = (b/a)' vanishes on I")
    # phi must vanish outside I x (L-, L+)
    fn = lambdify_fields([phi], (TH, Z))
    zz = np.linspace(*s.z_range, 41)
    outside = np.concatenate([np.linspace(0, th1, 60, endpoint=True), np.linspace(th2, s.p, 60)])
    TT, ZZ = np.meshgrid(outside, zz, indexing="ij")
    if np.max(np.abs(fn(TT, ZZ)[0])) > 1e-12:
        raise SupportViolation("phi is not supported inside I x (L-, L+)")
    _check_z_support(s, phi)
    _check_c_nonzero(s)
    a_, b_, c_, B_ = profile_functions()
    rho = b_ / a_
    rho_p = sp.diff(rho, TH)
    vth = sp.diff(sp.diff(phi, TH) / rho_p, TH) / a_
    Bp = sp.diff(B_, Z)
    vz = (Bp * sp.diff(phi, TH) + rho_p * sp.diff(phi, Z)
          - (B_ + rho) * sp.diff(phi, TH, Z)) / (Bp * rho_p)
    gen = {"case": "case2", "phi": phi, "rho": rho, "interval": tuple(interval), "h": h}
    return _complete(s, vth, vz, gen, wavenumber)


def membrane_strain(s, f: AnsatzField):
    """Callable returning the t = 0 symmetric simplified strain E_0 (3 x 3)."""
    a_, b_, c_, B_ = profile_functions()
    At = a_ * B_ + b_
    Az = sp.diff(B_, Z)
    (vt, vth, vz), (wt, wth, wz) = f.v, f.w
    G = [
        [wt, (sp.diff(vt, TH) - c_ * vth) / At, sp.diff(vt, Z) / Az],
        [wth, (sp.diff(vth, TH) + c_ * vt + a_ * vz) / At, sp.diff(vth, Z) / Az],
        [wz, (sp.diff(vz, TH) - a_ * vth) / At, sp.diff(vz, Z) / Az],
    ]
    fn = lambdify_fields([G[i][j] for i in range(3) for j in range(3)], (TH, Z), s)

    def E0(theta, z):
        out = fn(theta, z)
        return sym_part(np.stack(out).reshape((3, 3) + np.shape(out[0])))

    return E0


def membrane_residual(s, f: AnsatzField, n_theta=128, n_z=33, interval=None):
    """Max |E_0| over all components except zz on a sample grid."""
    lo, hi = interval if interval is not None else (0.0, s.p)
    th = np.linspace(lo, hi, n_theta, endpoint=interval is not None)
    z = np.linspace(*s.z_range, n_z)
    TT, ZZ = np.meshgrid(th, z, indexing="ij")
    E = membrane_strain(s, f)(TT, ZZ)
    E[2, 2] = 0.0
    return float(np.max(np.abs(E)))


def optimal_ansatz(s, h, Phi=None, interval=None):
    """Oscillating ansatz with n(h) = floor(h^-1/4) for the given surface."""
    Phi = Phi or default_Phi(s.p, s.z_range)
    try:
        separable_factors(s)
        separable = True
    except NotSeparable:
        separable = False
    if separable:
        phi, n = oscillating_phi(Phi, h)
        return case1_field(s, phi, h, wavenumber=n)
    if interval is None:
        raise NotSeparable("case-2 ansatz needs an interval I")
    eta = bump(TH, *interval)
    phi, n = oscillating_phi(Phi, h, eta)
    return case2_field(s, phi, interval, h, wavenumber=n)
