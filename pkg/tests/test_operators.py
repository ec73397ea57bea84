import math
import warnings

import numpy as np
import pytest
import sympy as sp

from helpers import random_smooth_field
from kornlab._symbolic import TH, T, Z
from kornlab.errors import DegenerateMetric, NoEmbedding, UnresolvedOscillation, ZeroField
from kornlab.operators import (DisplacementField, QuadratureSpec, SampledField, cartesian_consistency,
                               energy_norms, gradient, korn_functionals, rigid_motion_basis,
                               rigid_motion_field, sym_part)

ROTATION = DisplacementField.from_sympy([0, 1 + T, 0], label="rotation")


@pytest.mark.parametrize("kind", ["full", "simplified"])
def test_zero_field_has_zero_gradient(cyl, kind):
    G = gradient(cyl, DisplacementField.zero(), (0.01, 0.3, 0.5), kind)
    assert np.all(G == 0)


def test_rotation_full_gradient(cyl):
    for t in (-0.1, 0.0, 0.07):
        G = gradient(cyl, ROTATION, (t, 1.1, 0.4), "full")
        expected = np.zeros((3, 3))
        expected[0, 1], expected[1, 0] = -1.0, 1.0
        assert np.allclose(G, expected, atol=1e-15)
        assert np.allclose(sym_part(G), 0, atol=1e-15)


def test_rotation_simplified_gradient_shows_thickness_gap(cyl):
    t = 0.1
    G = gradient(cyl, ROTATION, (t, 1.1, 0.4), "simplified")
    assert G[0, 1] == pytest.approx(-(1 + t))
    assert G[1, 0] == pytest.approx(1.0)
    assert sym_part(G)[0, 1] == pytest.approx(-t / 2)


def test_sym_part_examples():
    assert np.array_equal(sym_part(np.eye(3)), np.eye(3))
    S = np.array([[0, 2, -1], [-2, 0, 3], [1, -3, 0.0]])
    assert np.array_equal(sym_part(S), np.zeros((3, 3)))
    M = np.zeros((3, 3))
    M[0, 1] = 1
    E = sym_part(M)
    assert E[0, 1] == E[1, 0] == 0.5


def test_degenerate_metric_for_thick_shell(cyl):
    with pytest.raises(DegenerateMetric):
        gradient(cyl, ROTATION, (-1.5, 0.0, 0.5), "full")


def test_energy_norms_axial_stretch(cyl):
    h = 0.1
    nb = energy_norms(cyl, DisplacementField.from_sympy([0, 0, Z]), h)
    assert nb.sym_simp_sq == pytest.approx(2 * math.pi * h, rel=1e-12)


def test_energy_norms_zero_field(cyl):
    nb = energy_norms(cyl, DisplacementField.zero(), 0.1)
    assert all(v == 0 for v in vars(nb).values())


def test_energy_norms_rotation(cyl):
    h = 0.05
    nb = energy_norms(cyl, ROTATION, h)
    assert nb.sym_full_sq < 1e-12
    assert nb.grad_full_sq == pytest.approx(4 * math.pi * h * 1.0, rel=1e-12)


def test_rigid_motion_examples(cyl):
    pts = (np.array([0.02, -0.03]), np.array([0.4, 2.0]), np.array([0.1, 0.9]))
    t, th, z = pts
    up = rigid_motion_field(cyl, np.zeros((3, 3)), [0, 0, 1])(*pts)
    assert np.allclose(up, [[0, 0], [0, 0], [1, 1]], atol=1e-14)
    A, _ = rigid_motion_basis()[5]  # rotation about e_3
    rot = rigid_motion_field(cyl, A, np.zeros(3))(*pts)
    assert np.allclose(rot, [0 * t, 1 + t, 0 * t], atol=1e-14)
    tr = rigid_motion_field(cyl, np.zeros((3, 3)), [1, 0, 0])(*pts)
    assert np.allclose(tr, [np.cos(th), -np.sin(th), 0 * t], atol=1e-14)


def test_rigid_motion_needs_embedding(wavy):
    with pytest.raises(NoEmbedding):
        rigid_motion_field(wavy, np.zeros((3, 3)), [1, 0, 0])


def test_rigid_motion_rejects_non_skew(cyl):
    with pytest.raises(ValueError):
        rigid_motion_field(cyl, np.eye(3), np.zeros(3))


@pytest.mark.parametrize("name,tol", [("cyl", 1e-12), ("cone", 1e-12), ("ellipse", 1e-10)])
def test_rigid_motion_kernel(name, tol, request, rng):
    # the ellipse frame comes from a spline, so its kernel holds to spline round-off
    s = request.getfixturevalue(name)
    n = 1000
    t = rng.uniform(-0.05, 0.05, n)
    th = rng.uniform(0, s.p, n)
    z = rng.uniform(*s.z_range, n)
    for A, b in rigid_motion_basis():
        G = gradient(s, rigid_motion_field(s, A, b), (t, th, z), "full")
        assert np.max(np.abs(sym_part(G))) < tol


def test_cartesian_consistency_rigid(cyl, cone):
    for s in (cyl, cone):
        for A, b in rigid_motion_basis():
            err = cartesian_consistency(s, rigid_motion_field(s, A, b), (0.01, 0.7, 1.3 if s is cone else 0.3))
            assert err <= 1e-10


def test_cartesian_consistency_smooth_field(cyl):
    u = DisplacementField.from_sympy([sp.sin(TH) * sp.cos(Z), 0, 0])
    assert cartesian_consistency(cyl, u, (0.02, 0.4, 0.6), 1e-5) <= 1e-6


def test_cartesian_consistency_reports_cancellation(cyl):
    u = DisplacementField.from_sympy([sp.sin(TH) * sp.cos(Z), 0, 0])
    err = cartesian_consistency(cyl, u, (0.02, 0.4, 0.6), 1e-12)
    assert np.isfinite(err) and err > 1e-6


def test_korn_functionals_rotation_and_zero(cyl):
    q_full, q_simp, _ = korn_functionals(cyl, ROTATION, 0.1)
    assert q_full < 1e-12
    with pytest.raises(ZeroField):
        korn_functionals(cyl, DisplacementField.zero(), 0.1)


def test_gradient_is_linear(cone, rng):
    u, _ = random_smooth_field(rng, cone.p)
    v, _ = random_smooth_field(rng, cone.p)
    pts = (rng.uniform(-0.05, 0.05, 50), rng.uniform(0, cone.p, 50), rng.uniform(1, 2, 50))
    lhs = gradient(cone, 2.5 * u + (-0.75) * v, pts)
    rhs = 2.5 * gradient(cone, u, pts) - 0.75 * gradient(cone, v, pts)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_full_and_simplified_gradients_are_close(ellipse, rng):
    h = 0.1
    cmax = ellipse.c_range()[1]
    Amin = ellipse.A_theta_min()
    bound = h * cmax / (2 * Amin - h * cmax)
    for _ in range(5):
        u, _ = random_smooth_field(rng, ellipse.p)
        pts = (rng.uniform(-h / 2, h / 2, 200), rng.uniform(0, ellipse.p, 200), rng.uniform(0, 1, 200))
        Gf = gradient(ellipse, u, pts, "full")
        Gs = gradient(ellipse, u, pts, "simplified")
        assert np.all(np.abs(Gf - Gs) <= bound * np.abs(Gf) + 1e-14)


def test_integration_by_parts_identity(cyl):
    # u_theta vanishes at both z-ends; the two mixed products integrate alike
    uth = sp.sin(sp.pi * Z) * (sp.cos(TH) + 0.3 * sp.sin(2 * TH) * Z)
    uz = sp.exp(Z) * sp.sin(TH + 0.2) + Z**2 * sp.cos(3 * TH)
    f = sp.lambdify((TH, Z), [sp.diff(uth, Z) * sp.diff(uz, TH), sp.diff(uth, TH) * sp.diff(uz, Z)])
    q = QuadratureSpec(n_theta=64, z_panels=8, z_nodes=8)
    _, _, th, wth, z, wz = q.nodes(cyl, 0.1)
    TT, ZZ = np.meshgrid(th, z, indexing="ij")
    W = np.outer(wth, wz)
    a, b = f(TT, ZZ)
    assert np.sum(W * a) == pytest.approx(np.sum(W * b), abs=1e-8)


def test_norms_invariant_under_theta_shift(cyl, rng):
    _, comps = random_smooth_field(rng, cyl.p)
    u = DisplacementField.from_sympy(comps)
    v = DisplacementField.from_sympy([c.subs(TH, TH + 0.6) for c in comps])
    a, b = energy_norms(cyl, u, 0.1), energy_norms(cyl, v, 0.1)
    for x, y in zip(vars(a).values(), vars(b).values()):
        assert x == pytest.approx(y, rel=1e-10)


def test_sym_norms_dominated_by_gradient_norms(cone, rng):
    u, _ = random_smooth_field(rng, cone.p)
    nb = energy_norms(cone, u, 0.2)
    assert nb.sym_full_sq <= nb.grad_full_sq
    assert nb.sym_simp_sq <= nb.grad_simp_sq


def test_unresolved_oscillation_warns(cyl):
    u = DisplacementField.from_sympy([sp.cos(20 * TH), 0, 0], wavenumber=20)
    with pytest.warns(UnresolvedOscillation):
        energy_norms(cyl, u, 0.1, QuadratureSpec(n_theta=64))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        energy_norms(cyl, u, 0.1, QuadratureSpec(n_theta=160))


def test_sampled_field_matches_analytic_gradient(cone):
    x = 2 * sp.pi * TH / sp.Float(cone.p, 17)
    u = DisplacementField.from_sympy([sp.sin(x) * Z**2, T * sp.cos(2 * x) + Z, sp.exp(Z) * sp.cos(x)])
    t = np.array([-0.05, 0.05])
    th = np.arange(256) * cone.p / 256
    z = np.linspace(1, 2, 129)
    su = SampledField.from_field(u, t, th, z)
    pts = (np.full(5, 0.05), th[[3, 40, 100, 200, 255]], z[[0, 10, 64, 100, 128]])
    Ga = gradient(cone, u, pts)
    Gs = gradient(cone, su, pts)
    err = np.abs(Ga - Gs)
    # fourth order inside, second-order one-sided stencils at the z ends
    assert np.max(err[..., 1:4]) < 1e-6
    assert np.max(err) < 1e-3


def test_numpy_random_field_jacobian_and_periodicity(cone, rng):
    # the fast helper agrees with finite differences of itself
    from helpers import random_trig_field
    u = random_trig_field(rng, cone.p)
    pt = (np.array([0.02]), np.array([1.3]), np.array([1.4]))
    vals, jac = u.evaluate(*pt)
    d = 1e-6
    for j in range(3):
        e = [np.zeros(1)] * 3
        e[j] = np.full(1, d)
        plus = u.evaluate(*(a + b for a, b in zip(pt, e)))[0]
        minus = u.evaluate(*(a - b for a, b in zip(pt, e)))[0]
        assert np.allclose(jac[:, j], (plus - minus) / (2 * d), atol=1e-7)
    # periodic in theta
    assert np.allclose(u.evaluate(pt[0], pt[1] + cone.p, pt[2])[0], vals, atol=1e-12)
