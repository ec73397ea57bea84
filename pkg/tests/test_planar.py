import math

import numpy as np
import pytest
import sympy as sp

from kornlab import geometry
from kornlab._symbolic import X, Y
from kornlab.errors import CoeffVanishes, NonConvergence, NotHarmonic, VariantViolation, ZeroDenominator
from kornlab.operators import DisplacementField, gradient
from kornlab.planar import (Grid2, PlanarCoeffs, PlanarField, PlanarQuadrature, harmonic_extension,
                            harmonic_gap, korn15_ratio, laplacian5, planar_forms, random_field,
                            random_fields, separable_harmonics)

P = 1.0
UNIT = PlanarCoeffs()


def _G_at(f, c, h=0.2):
    G, E, _ = planar_forms(f, c, PlanarQuadrature(h, f.p, n_x=2, y_panels=2, y_nodes=2))
    return G, E


def test_forms_stretch():
    G, E = _G_at(PlanarField.from_sympy(X, 0, P), UNIT)
    expected = np.array([[1.0, 0.0], [0.0, 0.0]])[:, :, None, None]
    assert np.allclose(G, expected) and np.allclose(E, expected)


def test_forms_rotation_has_no_strain():
    G, E = _G_at(PlanarField.from_sympy(Y, -X, P), UNIT)
    assert np.allclose(G, np.array([[0.0, 1.0], [-1.0, 0.0]])[:, :, None, None])
    assert np.allclose(E, 0)


def test_forms_shell_coefficients():
    G, _ = _G_at(PlanarField.from_sympy(0, 1, P), PlanarCoeffs.shell(1.0, 1.0))
    assert np.allclose(G, np.array([[0.0, -1.0], [0.0, 0.0]])[:, :, None, None])


def test_coefficient_vanishing_is_rejected():
    with pytest.raises(CoeffVanishes):
        _G_at(PlanarField.from_sympy(X, 0, P), PlanarCoeffs(a1="y - 0.5"))


def test_ratio_zero_for_constant_periodic_field():
    assert korn15_ratio(PlanarField.from_sympy(1, 0, P), UNIT, 0.1) == 0.0


def test_variant_violation():
    f = PlanarField.from_sympy(0, X, P, variant="dirichlet", l=0.3)
    with pytest.raises(VariantViolation):
        korn15_ratio(f, UNIT, 0.1)
    g = PlanarField.from_sympy(Y, 0, P, variant="periodic")
    with pytest.raises(VariantViolation):
        korn15_ratio(g, UNIT, 0.1)


def test_zero_denominator():
    with pytest.raises(ZeroDenominator):
        korn15_ratio(PlanarField.from_sympy(1, 0, P, variant="dirichlet"), UNIT, 0.1)


def _brute_force_ratio(u, v, c_exprs, h, p, variant):
    """Second implementation: sympy integrands and a finer, differently laid out rule."""
    a1, b1, a2, b2 = c_exprs
    G = [[sp.diff(u, X), a1 * sp.diff(u, Y) + b1 * v], [sp.diff(v, X), a2 * sp.diff(v, Y) + b2 * u]]
    E = [[(G[i][j] + G[j][i]) / 2 for j in range(2)] for i in range(2)]
    integrands = [sum(g**2 for row in G for g in row), sum(e**2 for row in E for e in row), u**2, u**2 + v**2]
    fn = sp.lambdify((X, Y), integrands)
    gx, wx = np.polynomial.legendre.leggauss(16)
    gy, wy = np.polynomial.legendre.leggauss(12)
    e = np.linspace(0, p, 101)
    ys = ((e[1:] + e[:-1])[:, None] / 2 + np.diff(e)[:, None] / 2 * gy).ravel()
    wys = (np.diff(e)[:, None] / 2 * wy).ravel()
    Xg, Yg = np.meshgrid(h / 2 * gx, ys, indexing="ij")
    W = np.outer(h / 2 * wx, wys)
    Gs, Es, us, ps = (float(np.sum(W * np.broadcast_to(v_, Xg.shape))) for v_ in fn(Xg, Yg))
    if variant == "periodic":
        return Gs / (math.sqrt(us * Es) / h + Es + ps)
    return Gs / (math.sqrt(Es) * (math.sqrt(us) / h + math.sqrt(Es)))


@pytest.mark.parametrize("variant", ["periodic", "dirichlet"])
def test_ratio_matches_brute_force_quadrature(variant, rng):
    k = 2 * sp.pi
    cs = [sp.Float(c, 17) for c in rng.normal(size=8)]
    u = cs[0] * sp.cos(k * Y) + cs[1] * X * sp.cos(2 * k * Y) + cs[2] * X**2
    v = cs[3] * sp.sin(k * Y) + cs[4] * X * sp.sin(3 * k * Y) - X * sp.diff(u, Y)
    if variant == "periodic":
        u += cs[5] * sp.sin(k * Y) * X
    c_exprs = (1 + Y / 3, sp.Rational(-1, 2), sp.Integer(2) - Y, Y**2)
    coeffs = PlanarCoeffs(*[str(e) for e in c_exprs])
    h = 0.1
    f = PlanarField.from_sympy(u, v, P, variant=variant)
    got = korn15_ratio(f, coeffs, h)
    want = _brute_force_ratio(u, v, c_exprs, h, P, variant)
    assert np.isfinite(got)
    assert got == pytest.approx(want, rel=1e-8)


@pytest.mark.parametrize("variant", ["periodic", "dirichlet"])
def test_random_fields_are_admissible_and_reproducible(variant):
    a = random_fields(7, 10, P, variant)
    b = random_fields(7, 10, P, variant)
    x = np.linspace(-0.05, 0.05, 5)
    y = np.linspace(0, P, 9)
    Xg, Yg = np.meshgrid(x, y, indexing="ij")
    for fa, fb in zip(a, b):
        fa.check_variant(0.1)
        va, ja = fa.evaluate(Xg, Yg)
        vb, jb = fb.evaluate(Xg, Yg)
        assert np.array_equal(va, vb) and np.array_equal(ja, jb)


def test_random_field_jacobian_matches_finite_differences(rng):
    f = random_field(rng, P, "periodic")
    x, y, d = np.array([0.013]), np.array([0.37]), 1e-6
    _, jac = f.evaluate(x, y)
    fd_x = (f.evaluate(x + d, y)[0] - f.evaluate(x - d, y)[0]) / (2 * d)
    fd_y = (f.evaluate(x, y + d)[0] - f.evaluate(x, y - d)[0]) / (2 * d)
    assert np.allclose(jac[:, 0], fd_x, atol=1e-6)
    assert np.allclose(jac[:, 1], fd_y, atol=1e-6)


def test_forms_agree_with_shell_cross_section():
    # on a surface with A_theta = 1 and A_z = 1 + z the t-z block of the shell
    # gradient of (u_t, 0, u_z)(t, z) is the planar G with a1 = a2 = 1 / A_z
    s = geometry.build_surface("x + x**2/2", 0, 1, 1, 2 * math.pi, (0.0, 1.0), name="stretched")
    ut = sp.sin(2 * sp.pi * Y) * (1 + X) + X**2 * Y
    uz = sp.cos(sp.pi * Y) * X + Y**3
    f = PlanarField.from_sympy(ut, uz, 1.0)
    quad = PlanarQuadrature(0.1, 1.0, n_x=4, y_panels=4, y_nodes=4)
    G2, _, _ = planar_forms(f, PlanarCoeffs("1/(1 + y)", 0, "1/(1 + y)", 0), quad)
    Xg, Yg, _ = quad.nodes()
    from kornlab._symbolic import T, Z
    u3 = DisplacementField.from_sympy([ut.subs({X: T, Y: Z}), 0, uz.subs({X: T, Y: Z})])
    G3 = gradient(s, u3, (Xg, np.full_like(Xg, 0.7), Yg), "full")
    block = G3[np.ix_([0, 2], [0, 2])]
    assert np.max(np.abs(block - G2)) <= 1e-10


# ---------------------------------------------------------------------------
# harmonic extension
# ---------------------------------------------------------------------------


GRID = Grid2(0.5, 1.0, 21, 41)


def test_extension_of_linear_data_is_exact():
    w = harmonic_extension(lambda x, y: x, GRID)
    Xg, _ = GRID.mesh()
    assert np.max(np.abs(w - Xg)) < 1e-12


def test_extension_of_x_squared_obeys_max_principle():
    w = harmonic_extension(lambda x, y: x**2, GRID)
    Xg, _ = GRID.mesh()
    b = w[GRID.boundary_mask()]
    assert b.min() - 1e-14 <= w.min() and w.max() <= b.max() + 1e-14
    assert np.max(np.abs(w - Xg**2)) > 1e-3
    assert np.max(np.abs(laplacian5(w, GRID))) < 1e-8


def test_extension_second_order_convergence():
    def err(n):
        g = Grid2(0.5, 1.0, n, 2 * n - 1)
        Xg, Yg = g.mesh()
        w = harmonic_extension(lambda x, y: np.exp(x) * np.cos(y), g)
        return np.max(np.abs(w - np.exp(Xg) * np.cos(Yg)))

    e1, e2 = err(11), err(21)
    assert 3.0 < e1 / e2 < 5.0


def test_extension_quadratic_harmonic():
    w = harmonic_extension(lambda x, y: x**2 - y**2, GRID)
    Xg, Yg = GRID.mesh()
    assert np.max(np.abs(w - (Xg**2 - Yg**2))) < 1e-10


def test_extension_cg_matches_direct():
    g = lambda x, y: np.sin(3 * y) + x * y
    a = harmonic_extension(g, GRID)
    b = harmonic_extension(g, GRID, method="cg", tol=1e-12)
    assert np.max(np.abs(a - b)) < 1e-8


def test_extension_cg_budget_exhausted():
    with pytest.raises(NonConvergence):
        harmonic_extension(lambda x, y: np.sin(3 * y) + x * y, GRID, method="cg", maxiter=2)


def _discrete_energy(w, g):
    return (np.sum(np.diff(w, axis=0) ** 2) * g.dy / g.dx + np.sum(np.diff(w, axis=1) ** 2) * g.dx / g.dy)


def test_extension_minimizes_dirichlet_energy(rng):
    w = harmonic_extension(lambda x, y: np.cos(2 * y) * (1 + x), GRID)
    e0 = _discrete_energy(w, GRID)
    interior = ~GRID.boundary_mask()
    for _ in range(10):
        v = w.copy()
        v[interior] += 0.01 * rng.standard_normal(interior.sum())
        assert _discrete_energy(v, GRID) >= e0


# ---------------------------------------------------------------------------
# sharp harmonic inequality
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("h", [1.0, 0.25, 1 / 64])
def test_gap_linear_harmonic(h):
    p = 2 * math.pi
    terms = harmonic_gap(X, h, p, details=True)
    assert terms.w_sq == pytest.approx(p * h**3 / 12, rel=1e-13)
    assert terms.wx_sq == pytest.approx(h * p, rel=1e-13)
    assert abs(terms.gap - 2 * h * p) <= 1e-12 * max(1.0, 2 * h * p)


def test_gap_constant_is_equality_edge():
    assert harmonic_gap(sp.Integer(1), 0.1, 1.0) == 0.0


def test_gap_rejects_non_harmonic():
    with pytest.raises(NotHarmonic):
        harmonic_gap(X**2, 0.1, 1.0)


def test_gap_is_negative_without_a_boundary_condition():
    # w = y is harmonic but neither periodic nor vanishing at the y-ends
    h, p = 0.1, 1.0
    assert harmonic_gap(Y, h, p) == pytest.approx(-h * p, rel=1e-12)


def test_gap_grid_path_matches_closed_form():
    g = Grid2(0.25, 2.0, 9, 33)
    w = harmonic_extension(lambda x, y: x, g)
    assert harmonic_gap(w, 0.25, 2.0, grid=g) == pytest.approx(2 * 0.25 * 2.0, rel=1e-12)


def test_gap_grid_path_rejects_non_harmonic():
    g = Grid2(0.25, 2.0, 9, 33)
    Xg, _ = g.mesh()
    with pytest.raises(NotHarmonic):
        harmonic_gap(Xg**2, 0.25, 2.0, grid=g)


def test_separable_harmonic_family():
    p = 2 * math.pi
    family = separable_harmonics(p)
    assert len(family) >= 50
    for _, w in family:
        assert sp.simplify(sp.diff(w, X, 2) + sp.diff(w, Y, 2)) == 0
    for k in (2, 4, 6):
        h = 2.0**-k
        for _, w in family:
            assert harmonic_gap(w, h, p) >= -1e-10
