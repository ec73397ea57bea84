"""Shared test utilities: random smooth displacement fields."""
import numpy as np
import sympy as sp

from kornlab._symbolic import TH, T, Z
from kornlab.operators import DisplacementField


def random_smooth_field(rng, p, modes=2, surface=None):
    """Trigonometric-in-theta, polynomial-in-(t, z) field with seeded coefficients."""
    k = 2 * sp.pi / sp.nsimplify(p)
    comps = []
    for _ in range(3):
        e = sp.Integer(0)
        for m in range(modes + 1):
            for trig in (sp.cos, sp.sin):
                a0, a1, a2, b1 = (sp.Float(v, 17) for v in rng.normal(size=4))
                e += trig(m * k * TH) * (a0 + a1 * Z + a2 * Z**2 + b1 * T * (1 + Z))
        comps.append(e)
    return DisplacementField.from_sympy(comps, surface=surface, label="random"), comps


def random_trig_field(rng, p, modes=2):
    """Same family as :func:`random_smooth_field`, evaluated directly in numpy.

    Each component is sum_m (A_m cos(m k theta) + B_m sin(m k theta)) with
    A_m, B_m of the form a0 + a1 z + a2 z^2 + b1 t (1 + z).
    """
    k = 2 * np.pi / p
    coef = rng.normal(size=(3, modes + 1, 2, 4))
    m = np.arange(modes + 1) * k

    def f(t, th, z):
        t, th, z = np.broadcast_arrays(*(np.asarray(v, float) for v in (t, th, z)))
        shape = t.shape
        t, th, z = (v.reshape(-1, 1) for v in (t, th, z))
        cs, sn = np.cos(m * th), np.sin(m * th)
        vals = np.empty((3,) + t.shape[:1])
        jac = np.empty((3, 3) + t.shape[:1])
        for i in range(3):
            A = [coef[i, :, j, 0] + coef[i, :, j, 1] * z + coef[i, :, j, 2] * z**2
                 + coef[i, :, j, 3] * t * (1 + z) for j in range(2)]
            A_t = [coef[i, :, j, 3] * (1 + z) for j in range(2)]
            A_z = [coef[i, :, j, 1] + 2 * coef[i, :, j, 2] * z + coef[i, :, j, 3] * t for j in range(2)]
            vals[i] = np.sum(A[0] * cs + A[1] * sn, axis=1)
            jac[i, 0] = np.sum(A_t[0] * cs + A_t[1] * sn, axis=1)
            jac[i, 1] = np.sum(m * (-A[0] * sn + A[1] * cs), axis=1)
            jac[i, 2] = np.sum(A_z[0] * cs + A_z[1] * sn, axis=1)
        return vals.reshape((3,) + shape), jac.reshape((3, 3) + shape)

    return DisplacementField(f, label="random-trig")
