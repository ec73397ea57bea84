"""Finite element quadratic forms for the shell and the discrete Korn constant.

The displacement is discretized with tensor-product trilinear elements in
``(t, theta, z)`` (periodic in theta unless the V3 condition cuts the shell
at theta = 0).  Two quadratic forms are assembled on the free DOFs,

    x^T A_E x = ||(grad u)_sym||^2,     x^T A_G x = ||grad u||^2,

and the Korn constant is the smallest eigenvalue of ``A_E x = lambda A_G x``.
"""
from __future__ import annotations

import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import DegenerateMetric, NonConvergence, NotPD, ResolutionTooLow
from .geometry import ZeroGaussSurface

BC_TAGS = ("V1", "V2", "V3", "PeriodicOnly")
CONSTRAINED = -1

# 2-point Gauss abscissae on the reference interval [0, 1]
_G2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))

# Sampling of each gradient entry (row-major index 3*i + j) under the "mitc"
# element: which reference coordinates are pinned to the element midpoint.
# Entries coupling theta-derivatives with zeroth-order curvature terms are
# tied at the theta-midpoint, those involving z-derivatives at the z-midpoint.
_TYING = {
    0: (False, False, False),  # (t, t)
    1: (False, True, False),   # (t, theta)
    2: (False, False, True),   # (t, z)
    3: (False, True, False),   # (theta, t)
    4: (False, True, False),   # (theta, theta)
    5: (False, True, True),    # (theta, z)
    6: (False, False, True),   # (z, t)
    7: (False, True, True),    # (z, theta)
    8: (False, False, True),   # (z, z)
}


@dataclass(frozen=True)
class Grid3:
    """Tensor grid of the shell with element quadrature data.

    ``t``, ``theta`` and ``z`` are node coordinates; for a periodic grid the
    theta nodes exclude ``p``.  ``weights`` holds the 2x2x2 Gauss weights of
    every element multiplied by the measure ``A_z A_theta``; its shape is
    ``(n_elements, 8)``.
    """

    surface: ZeroGaussSurface
    h: float
    t: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    periodic: bool
    weights: np.ndarray

    @property
    def shape(self):
        return (len(self.t), len(self.theta), len(self.z))

    @property
    def n_elements(self):
        nt, nth, nz = self.shape
        return (nt - 1) * (nth if self.periodic else nth - 1) * (nz - 1)

    @property
    def spacing(self):
        return (self.t[1] - self.t[0], self.theta[1] - self.theta[0], self.z[1] - self.z[0])

    def element_origins(self):
        """Index triples of the lower corner of each element, C order."""
        nt, nth, nz = self.shape
        et = np.arange(nt - 1)
        eth = np.arange(nth if self.periodic else nth - 1)
        ez = np.arange(nz - 1)
        I, J, K = np.meshgrid(et, eth, ez, indexing="ij")
        return I.ravel(), J.ravel(), K.ravel()

    def node_index(self, i, j, k):
        nt, nth, nz = self.shape
        if self.periodic:
            j = np.mod(j, nth)
        return (i * nth + j) * nz + k

    def element_points(self, xi):
        """Physical coordinates of reference point ``xi`` in every element."""
        dt, dth, dz = self.spacing
        I, J, K = self.element_origins()
        return (self.t[I] + xi[0] * dt, self.theta[0] + (J + xi[1]) * dth, self.z[K] + xi[2] * dz)


def make_grid(s: ZeroGaussSurface, h: float, n_t: int = 2, n_theta: int = 32, n_z: int = 32,
              periodic: bool = True) -> Grid3:
    """Uniform nodes in t on [-h/2, h/2], in theta on [0, p) and in z on [L-, L+]."""
    if n_t < 2 or n_theta < 8 or n_z < 3:
        raise ResolutionTooLow(f"need N_t >= 2, N_theta >= 8, N_z >= 3; got {n_t}, {n_theta}, {n_z}")
    if not 0 < h < 1:
        raise ValueError("thickness h must lie in (0, 1)")
    t = np.linspace(-h / 2, h / 2, n_t)
    theta = np.arange(n_theta) * (s.p / n_theta) if periodic else np.linspace(0.0, s.p, n_theta + 1)
    z = np.linspace(s.z_range[0], s.z_range[1], n_z)
    grid = Grid3(s, h, t, theta, z, periodic, np.empty((0, 8)))
    dt, dth, dz = grid.spacing
    cols = []
    for xi in _gauss_points():
        _, th, zz = grid.element_points(xi)
        cols.append(0.125 * dt * dth * dz * s.A_z(zz) * s.A_theta(th, zz))
    return Grid3(s, h, t, theta, z, periodic, np.stack(cols, axis=1))


def _gauss_points():
    return [np.array((a, b, c)) for a in _G2 for b in _G2 for c in _G2]


def _shape(xi, spacing):
    """Trilinear shape values and physical derivatives at reference point ``xi``.

    Local node order is (dt, dtheta, dz) in {0,1}^3, C order.
    """
    N, Dt, Dth, Dz = (np.empty(8) for _ in range(4))
    for a, (i, j, k) in enumerate(np.ndindex(2, 2, 2)):
        f = [xi[0] if i else 1 - xi[0], xi[1] if j else 1 - xi[1], xi[2] if k else 1 - xi[2]]
        d = [1.0 if i else -1.0, 1.0 if j else -1.0, 1.0 if k else -1.0]
        N[a] = f[0] * f[1] * f[2]
        Dt[a] = d[0] * f[1] * f[2] / spacing[0]
        Dth[a] = f[0] * d[1] * f[2] / spacing[1]
        Dz[a] = f[0] * f[1] * d[2] / spacing[2]
    return N, Dt, Dth, Dz


def _b_matrix(grid: Grid3, xi, kind, sl=slice(None)):
    """Gradient operator at ``xi`` for elements ``sl``: shape (E, 9, 24).

    Row ``3*i + j`` is the frame entry (component i, direction j); column
    ``8*k + a`` is component k at local node a.
    """
    s = grid.surface
    t, th, z = (v[sl] for v in grid.element_points(xi))
    N, Dt, Dth, Dz = _shape(xi, grid.spacing)
    th = s.wrap(th)
    a = s.a(th)
    c = s.c(th)
    Az = s.A_z(z)
    den = s.A_theta(th, z) + (t * c if kind == "full" else 0.0)
    if np.any(den <= 0):
        raise DegenerateMetric("A_theta + t c <= 0 inside the shell")
    E = len(t)
    B = np.zeros((E, 9, 24))
    for i in range(3):
        B[:, 3 * i + 0, 8 * i:8 * i + 8] = Dt
        B[:, 3 * i + 2, 8 * i:8 * i + 8] = Dz[None, :] / Az[:, None]
        B[:, 3 * i + 1, 8 * i:8 * i + 8] = Dth[None, :] / den[:, None]
    # zeroth-order terms of the theta column
    B[:, 1, 8:16] -= (c / den)[:, None] * N
    B[:, 4, 0:8] += (c / den)[:, None] * N
    B[:, 4, 16:24] += (a / den)[:, None] * N
    B[:, 7, 8:16] -= (a / den)[:, None] * N
    return B


def _sym_rows(B):
    S = np.empty_like(B)
    for i in range(3):
        for j in range(3):
            S[:, 3 * i + j] = 0.5 * (B[:, 3 * i + j] + B[:, 3 * j + i])
    return S


def _element_matrices(grid: Grid3, kind, element, sl):
    """Element matrices (E, 24, 24) of both forms for the elements in ``sl``."""
    W = grid.weights[sl]
    KE = np.zeros((W.shape[0], 24, 24))
    KG = np.zeros_like(KE)
    cache = {}

    def B_at(xi):
        key = tuple(np.round(xi, 15))
        if key not in cache:
            cache[key] = _b_matrix(grid, xi, kind, sl)
        return cache[key]

    for q, xi in enumerate(_gauss_points()):
        if element == "trilinear":
            B = B_at(xi)
        elif element == "mitc":
            B = np.empty((W.shape[0], 9, 24))
            for r, pin in _TYING.items():
                xr = np.where(pin, 0.5, xi)
                B[:, r] = B_at(xr)[:, r]
        else:
            raise ValueError(f"unknown element {element!r}")
        S = _sym_rows(B)
        w = W[:, q][:, None, None]
        KG += w * np.einsum("eri,erj->eij", B, B)
        KE += w * np.einsum("eri,erj->eij", S, S)
    return KE, KG


def element_dofs(grid: Grid3):
    """Global (unconstrained) DOF numbers of every element, shape (E, 24)."""
    I, J, K = grid.element_origins()
    nodes = np.stack([grid.node_index(I + i, J + j, K + k) for i, j, k in np.ndindex(2, 2, 2)], axis=1)
    n_nodes = int(np.prod(grid.shape))
    return np.concatenate([nodes + comp * n_nodes for comp in range(3)], axis=1)


@dataclass(frozen=True)
class BoundaryCondition:
    tag: str

    def __post_init__(self):
        if self.tag not in BC_TAGS:
            raise ValueError(f"unknown boundary condition {self.tag!r}")

    @property
    def periodic(self):
        return self.tag != "V3"

    def constrained_mask(self, grid: Grid3):
        """Boolean array (3, N_t, N_theta, N_z) of constrained DOFs.

        V1: all components at z = L-, (u_t, u_theta) at z = L+.
        V2: (u_theta, u_z) at both ends.
        V3: u_theta at theta = 0 and theta = p, with the V2 end conditions.
        """
        m = np.zeros((3,) + grid.shape, dtype=bool)
        if self.tag == "V1":
            m[:, :, :, 0] = True
            m[0:2, :, :, -1] = True
        elif self.tag in ("V2", "V3"):
            m[1:3, :, :, 0] = True
            m[1:3, :, :, -1] = True
        if self.tag == "V3":
            m[1, :, 0, :] = True
            m[1, :, -1, :] = True
        return m


@dataclass(frozen=True)
class FormPair:
    """Symmetric forms on the free DOFs with the map from grid DOFs to columns."""

    A_E: sps.csr_matrix
    A_G: sps.csr_matrix
    dof_map: np.ndarray
    grid: Grid3
    meta: dict = field(default_factory=dict)

    @property
    def n_free(self):
        return self.A_E.shape[0]

    def restrict(self, nodal):
        """Free-DOF vector from nodal values of shape (3, N_t, N_theta, N_z)."""
        nodal = np.asarray(nodal, dtype=float)
        free = self.dof_map >= 0
        x = np.empty(self.n_free)
        x[self.dof_map[free]] = nodal[free]
        return x

    def expand(self, x):
        nodal = np.zeros(self.dof_map.shape)
        free = self.dof_map >= 0
        nodal[free] = x[self.dof_map[free]]
        return nodal

    def quotient(self, x):
        return float(x @ (self.A_E @ x)) / float(x @ (self.A_G @ x))


def assemble_forms(s: ZeroGaussSurface, grid: Grid3, h: float, bc, kind="full",
                   element="trilinear", threads: int = 1, chunk: int = 4096) -> FormPair:
    """Assemble both quadratic forms and eliminate the constrained DOFs.

    Element matrices are computed in chunks (optionally on a thread pool) and
    concatenated in element order, so the result is bitwise independent of
    ``threads``.
    """
    bc = bc if isinstance(bc, BoundaryCondition) else BoundaryCondition(bc)
    if bc.periodic != grid.periodic:
        raise ValueError(f"grid periodicity does not match boundary condition {bc.tag}")
    if kind not in ("full", "simplified"):
        raise ValueError(f"unknown gradient kind {kind!r}")
    if abs(grid.h - h) > 1e-15 * max(1.0, h) or grid.surface is not s:
        raise ValueError("grid was built for a different surface or thickness")
    cmax = float(np.max(np.abs(s.c_range())))
    if kind == "full" and 0.5 * h * cmax >= s.A_theta_min():
        raise DegenerateMetric(f"h * max|c| / 2 = {0.5 * h * cmax:.3g} reaches min A_theta")
    n_el = grid.n_elements
    slices = [slice(i, min(i + chunk, n_el)) for i in range(0, n_el, chunk)]
    work = lambda sl: _element_matrices(grid, kind, element, sl)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, slices))
    else:
        parts = [work(sl) for sl in slices]
    KE = np.concatenate([p[0] for p in parts])
    KG = np.concatenate([p[1] for p in parts])
    dofs = element_dofs(grid)
    n = 3 * int(np.prod(grid.shape))
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()

    mask = bc.constrained_mask(grid)
    dof_map = np.full(mask.shape, CONSTRAINED, dtype=np.int64)
    dof_map[~mask] = np.arange(int((~mask).sum()))
    keep = dof_map.ravel()

    free = np.flatnonzero(keep >= 0)
    # both forms are stored on the structural pattern of the element couplings
    pattern = sps.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()[free][:, free]
    pattern.sort_indices()
    pr = np.repeat(np.arange(pattern.shape[0]), np.diff(pattern.indptr))

    def build(K):
        A = sps.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()[free][:, free]
        A = 0.5 * (A + A.T)
        vals = np.asarray(A[pr, pattern.indices]).ravel()
        return sps.csr_matrix((vals, pattern.indices.copy(), pattern.indptr.copy()), shape=pattern.shape)

    meta = dict(surface=s.name, h=h, grid=grid.shape, kind=kind, bc=bc.tag, element=element)
    return FormPair(build(KE), build(KG), dof_map, grid, meta)


def interpolate_field(fp: FormPair, u) -> np.ndarray:
    """Nodal interpolant of a DisplacementField restricted to the free DOFs."""
    g = fp.grid
    T, H, Zz = np.meshgrid(g.t, g.theta, g.z, indexing="ij")
    return fp.restrict(u(T, H, Zz))


# ---------------------------------------------------------------------------
# binary container
# ---------------------------------------------------------------------------

_MAGIC = b"KSLF"
_VERSION = 1


def dump_forms(fp: FormPair, path):
    """Write both matrices as little-endian COO triplets.

    Layout: magic ``KSLF``; u64 version, n_rows, n_cols; then for A_E and
    A_G in turn a u64 nnz followed by nnz records (i64 row, i64 col, f64 value).
    """
    n = fp.n_free
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQ", _VERSION, n, n))
        rec = np.dtype([("row", "<i8"), ("col", "<i8"), ("val", "<f8")])
        for A in (fp.A_E, fp.A_G):
            C = A.tocoo()
            fh.write(struct.pack("<Q", C.nnz))
            arr = np.empty(C.nnz, dtype=rec)
            arr["row"], arr["col"], arr["val"] = C.row, C.col, C.data
            fh.write(arr.tobytes())


def read_forms(path):
    """Inverse of :func:`dump_forms`; returns ``(A_E, A_G)`` as CSR matrices."""
    rec = np.dtype([("row", "<i8"), ("col", "<i8"), ("val", "<f8")])
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a KSLF container")
        version, n, m = struct.unpack("<QQQ", fh.read(24))
        if version != _VERSION:
            raise ValueError(f"unsupported KSLF version {version}")
        out = []
        for _ in range(2):
            (nnz,) = struct.unpack("<Q", fh.read(8))
            arr = np.frombuffer(fh.read(nnz * rec.itemsize), dtype=rec)
            out.append(sps.csr_matrix((arr["val"], (arr["row"], arr["col"])), shape=(n, m)))
    return tuple(out)


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------


@dataclass
class EigResult:
    lam: float
    vector: np.ndarray
    iterations: int
    residual: float
    wall_time: float
    seed: int = 0
    history: list = field(default_factory=list)


def check_pd(A):
    """Sparse LU without pivoting as a definiteness probe; returns the factor."""
    A = sps.csc_matrix(A)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise NotPD(f"factorization failed: {exc}") from None
    d = lu.U.diagonal()
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotPD("form is not positive definite on the free DOFs")
    return lu


def _rayleigh_ritz(S, AE, AG):
    """Smallest Ritz pair of (AE, AG) on the columns of S (orthonormalised in AG)."""
    GS = AG @ S
    norms = np.einsum("ij,ij->j", S, GS)
    nz = norms > 0
    S, GS, norms = S[:, nz], GS[:, nz], norms[nz]
    scale = 1.0 / np.sqrt(norms)
    S, GS = S * scale, GS * scale
    M = S.T @ GS
    M = 0.5 * (M + M.T)
    K = S.T @ (AE @ S)
    K = 0.5 * (K + K.T)
    # drop directions that are numerically dependent in the AG inner product
    w, V = np.linalg.eigh(M)
    keep = w > 1e-12 * w.max()
    Q = V[:, keep] / np.sqrt(w[keep])
    vals, Y = np.linalg.eigh(Q.T @ K @ Q)
    return vals[0], S @ (Q @ Y[:, 0])


def min_generalized_eig(fp_or_pair, tol=1e-8, maxit=500, seed=0, x0=None, shift=None,
                        precondition=True) -> EigResult:
    """Smallest eigenpair of ``A_E x = lambda A_G x`` by a locally optimal iteration.

    Each step performs Rayleigh-Ritz on ``span{x, T r, p}`` where ``r`` is the
    residual, ``p`` the previous update and ``T`` the inverse of
    ``A_E + shift * A_G`` (a diagonal scaling when ``precondition`` is false).
    Since ``x`` stays in the subspace, the quotient never increases.  Stops when
    both the relative quotient change and ``||A_E x - lambda A_G x|| / ||A_G x||``
    fall below ``tol``.
    """
    t0 = time.perf_counter()
    if isinstance(fp_or_pair, FormPair):
        AE, AG = fp_or_pair.A_E, fp_or_pair.A_G
    else:
        AE, AG = (sps.csr_matrix(M) for M in fp_or_pair)
    n = AE.shape[0]
    check_pd(AG)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if precondition:
        if shift is None:
            # rough lower scale of the spectrum: the quotient of the start vector
            shift = 1e-3 * min(1.0, float(x @ (AE @ x)) / float(x @ (AG @ x)))
        lu = spla.splu(sps.csc_matrix(AE + shift * AG))
        T = lu.solve
    else:
        d = AG.diagonal()
        T = lambda r: r / d
    x /= np.sqrt(x @ (AG @ x))
    lam = float(x @ (AE @ x))
    p = None
    hist = [lam]
    for it in range(1, maxit + 1):
        r = AE @ x - lam * (AG @ x)
        res = np.linalg.norm(r) / np.linalg.norm(AG @ x)
        if res == 0.0 or it > 1 and res < tol and abs(hist[-2] - lam) <= tol * abs(lam):
            return EigResult(lam, x, it - 1, float(res), time.perf_counter() - t0, seed, hist)
        w = T(r)
        S = np.column_stack([x, w] if p is None else [x, w, p])
        _, x_new = _rayleigh_ritz(S, AE, AG)
        x_new /= np.sqrt(x_new @ (AG @ x_new))
        new_lam = float(x_new @ (AE @ x_new))
        if x_new @ (AG @ x) < 0:
            x_new = -x_new
        if new_lam > lam + 1e-13 * abs(lam):
            # x lies in the subspace, so an increase is round-off from an
            # ill-conditioned basis: restart without the search direction
            p = None
            hist.append(lam)
            continue
        p = x_new - x * float(x @ (AG @ x_new))
        if np.linalg.norm(p) == 0:
            p = None
        x, lam = x_new, float(new_lam)
        hist.append(lam)
    r = AE @ x - lam * (AG @ x)
    res = np.linalg.norm(r) / np.linalg.norm(AG @ x)
    raise NonConvergence(f"no convergence after {maxit} iterations (residual {res:.3e})")


def dense_generalized_min(A_E, A_G):
    """Reference smallest eigenpair by a dense solve (small problems only)."""
    w, V = sla.eigh(np.asarray(A_E.todense() if sps.issparse(A_E) else A_E),
                    np.asarray(A_G.todense() if sps.issparse(A_G) else A_G),
                    subset_by_index=[0, 0])
    return float(w[0]), V[:, 0]


# ---------------------------------------------------------------------------
# Korn constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResolutionPolicy:
    """Grid sizes as a function of h; the theta count follows the wavenumber n(h)."""

    n_t: int = 2
    theta_min: int = 32
    theta_per_wave: int = 16
    n_z: int = 32

    def sizes(self, h):
        from .ansatz import n_of_h

        return self.n_t, max(self.theta_min, self.theta_per_wave * n_of_h(h)), self.n_z


def korn_constant(s: ZeroGaussSurface, h: float, bc="V2", policy: Optional[ResolutionPolicy] = None,
                  kind="full", element="mitc", tol=1e-7, maxit=500, seed=0, threads=1,
                  return_forms=False):
    """Discrete Korn constant: smallest generalized eigenvalue of the assembled pair."""
    bc = bc if isinstance(bc, BoundaryCondition) else BoundaryCondition(bc)
    if bc.tag == "PeriodicOnly":
        raise ValueError("PeriodicOnly admits rigid motions; the Korn constant is zero")
    policy = policy or ResolutionPolicy()
    n_t, n_th, n_z = policy.sizes(h)
    grid = make_grid(s, h, n_t, n_th, n_z, periodic=bc.periodic)
    fp = assemble_forms(s, grid, h, bc, kind, element, threads)
    res = min_generalized_eig(fp, tol=tol, maxit=maxit, seed=seed)
    return (res, fp) if return_forms else res
