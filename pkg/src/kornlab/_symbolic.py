"""Bridge between sympy expressions and numeric profile callables.

Surface profiles enter symbolic expressions as undefined functions
``a(theta)``, ``b(theta)``, ``c(theta)``, ``B(z)``.  After differentiation the
``Derivative`` nodes are renamed to plain functions ``a_d2`` etc. so that
``lambdify`` can bind them to the numeric derivatives of the profiles.
"""
from __future__ import annotations

import numpy as np
import sympy as sp

T, TH, Z = sp.symbols("t theta z", real=True)
X, Y = sp.symbols("x y", real=True)

PROFILE_NAMES = ("a", "b", "c", "B")


def profile_functions():
    """Return the undefined sympy functions a, b, c (of theta) and B (of z)."""
    a, b, c, B = (sp.Function(n) for n in PROFILE_NAMES)
    return a(TH), b(TH), c(TH), B(Z)


def _rename_profiles(expr):
    reps = {}
    for d in expr.atoms(sp.Derivative):
        f = d.expr
        if isinstance(f, sp.core.function.AppliedUndef) and f.func.__name__ in PROFILE_NAMES:
            k = sum(cnt for _, cnt in d.variable_count)
            reps[d] = sp.Function(f"{f.func.__name__}_d{k}")(*f.args)
    expr = expr.xreplace(reps)
    reps = {}
    for f in expr.atoms(sp.core.function.AppliedUndef):
        if f.func.__name__ in PROFILE_NAMES:
            reps[f] = sp.Function(f"{f.func.__name__}_d0")(*f.args)
    return expr.xreplace(reps)


def profile_namespace(surface, max_order=6):
    ns = {}
    for name in PROFILE_NAMES:
        prof = getattr(surface, name)
        for k in range(max_order + 1):
            ns[f"{name}_d{k}"] = (lambda x, prof=prof, k=k: prof.d(x, k))
    return ns


def lambdify_fields(exprs, args, surface=None):
    """Vectorised callable returning a list of arrays broadcast to a common shape."""
    exprs = [_rename_profiles(sp.sympify(e)) for e in exprs]
    modules = [profile_namespace(surface), "numpy"] if surface is not None else ["numpy"]
    f = sp.lambdify(args, exprs, modules=modules, cse=True)

    def call(*vals):
        vals = [np.asarray(v, dtype=float) for v in vals]
        shape = np.broadcast_shapes(*(v.shape for v in vals))
        out = f(*vals)
        return [np.broadcast_to(np.asarray(o, dtype=float), shape).copy() for o in out]

    return call
