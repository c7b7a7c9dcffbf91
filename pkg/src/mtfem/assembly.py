"""Assembly of the nondivergence-form and biharmonic systems, Cordes
diagnostics, sparse solvers and error norms.

Element matrices are formed in shape-function space and then mapped to the
nodal basis by ``K = C K_shape C^T``.  The Hessian of a shape function on a
cell is ``B^T Hhat B`` with ``B = J^{-1}``, so for coefficients that are
constant on each cell the shape matrix is a fixed reference tensor
contracted against a small per-cell weight::

    K_shape[s, t] = |det J| * sum_{A, C} R[s, t, A, C] W[A, C]
    R[s, t, A, C] = sum_q w_q Hhat_s[q, A] Hhat_t[q, C]
"""

import logging
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import kernels
from .errors import CordesViolation, InvalidArgumentError, SolverError
from .quadrature import rule_simplex

log = logging.getLogger(__name__)

CHUNK = 256


@dataclass(eq=False)
class ProblemSpec:
    """A model problem with known solution.

    ``coef(x)`` returns the coefficient matrices ``(P, d, d)`` at physical
    points (``None`` for the biharmonic problem); ``exact(x)`` returns value,
    gradient and Hessian of the solution; ``rhs(x)`` the right-hand side.
    """

    name: str
    dim: int
    kind: str
    box: np.ndarray
    exact: object
    rhs: object
    coef: object = None
    lam: float = 1.0
    Lam: float = 1.0
    inhomogeneous: bool = False
    notes: dict = field(default_factory=dict)

    def gamma(self, x):
        A = self.coef(x)
        return np.trace(A, axis1=1, axis2=2) / np.sum(A * A, axis=(1, 2))


@dataclass(eq=False)
class SparseSystem:
    """Linear system over the free DOFs of a space."""

    matrix: sps.csr_matrix
    rhs: np.ndarray
    symmetric: bool
    space: object = None
    full_matrix: sps.csr_matrix = None

    @property
    def shape(self):
        return self.matrix.shape


# ---------------------------------------------------------------------------
# Cordes condition


@dataclass(frozen=True)
class CordesParameters:
    epsilon: object
    gamma_min: object
    gamma_max: object
    lam: float
    Lam: float
    delta: float


def _as_fraction_matrix(M):
    return [[Fraction(float(v)) for v in row] for row in M]


def cordes_parameters(A, dim, samples, exact=False, strict=True):
    """Cordes parameter ``eps``, the range of ``gamma = tr A / |A|^2`` and the
    ellipticity bounds of ``A`` over sample points.

    With ``exact=True`` the sample matrices are converted to fractions and
    ``eps``, ``gamma`` are returned as :class:`fractions.Fraction`.

    Raises
    ------
    CordesViolation
        If ``eps <= 0`` and ``strict`` is set; otherwise a warning is issued.
    """
    mats = A(np.atleast_2d(np.asarray(samples, dtype=float)))
    if not np.allclose(mats, np.swapaxes(mats, 1, 2)):
        raise InvalidArgumentError("coefficient matrix is not symmetric")
    ev = np.linalg.eigvalsh(mats)
    lam, Lam = float(ev.min()), float(ev.max())
    if exact:
        eps = gmin = gmax = None
        for M in mats:
            F = _as_fraction_matrix(M)
            tr = sum(F[i][i] for i in range(dim))
            nrm = sum(v * v for row in F for v in row)
            e = tr * tr / nrm - (dim - 1)
            g = tr / nrm
            eps = e if eps is None else min(eps, e)
            gmin = g if gmin is None else min(gmin, g)
            gmax = g if gmax is None else max(gmax, g)
    else:
        tr = np.trace(mats, axis1=1, axis2=2)
        nrm = np.sum(mats * mats, axis=(1, 2))
        eps = float(np.min(tr**2 / nrm) - (dim - 1))
        g = tr / nrm
        gmin, gmax = float(g.min()), float(g.max())
    if eps <= 0:
        msg = f"Cordes condition violated: eps = {float(eps):.4g}"
        if strict:
            raise CordesViolation(msg, float(eps))
        warnings.warn(msg)
        delta = float("nan")
    else:
        eps = min(eps, 1) if exact else min(eps, 1.0)
        delta = 1.0 - np.sqrt(1.0 - float(eps))
    return CordesParameters(eps, gmin, gmax, lam, Lam, float(delta))


# ---------------------------------------------------------------------------
# element kernels


def _reference_hessians(spec, rule):
    _, _, h = spec.polyset.tabulate(rule.points)
    return h  # (S, Q, d, d)


def _rtensor(spec, rule):
    h = _reference_hessians(spec, rule)
    S, Q, d, _ = h.shape
    hf = h.reshape(S, Q, d * d)
    R = np.einsum("q,sqa,tqc->stac", rule.weights, hf, hf, optimize=True)
    return R.reshape(S * S, d**4)


def _cell_points(mesh, cells, rule):
    coords = mesh.vertices[mesh.cells[cells]]
    return np.einsum("qi,cia->cqa", rule.points, coords)


def _detj(mesh, cells):
    return mesh.volumes[cells] * factorial(mesh.dim)


def _to_nodal(space, cells, Kshape):
    C = space.basis.C[cells]
    return kernels.congruence(C, Kshape)


def _check_degree(space, quad_degree):
    deg = space.spec.default_quad_degree if quad_degree is None else int(quad_degree)
    if deg < space.spec.default_quad_degree:
        raise InvalidArgumentError(
            f"quadrature degree {deg} below the exact-assembly default {space.spec.default_quad_degree}"
        )
    return deg


def rhs_degree(spec):
    return 2 * spec.shape_degree + 4


def _finish(space, Kloc, Floc, symmetric):
    l2g = space.l2g
    nc, N = l2g.shape
    rows = np.repeat(l2g, N, axis=1).ravel()
    cols = np.tile(l2g, (1, N)).ravel()
    K = sps.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(space.ndof, space.ndof)).tocsr()
    F = np.zeros(space.ndof)
    kernels.scatter_add(F, l2g, Floc)
    free = space.free
    Kff = K[free][:, free].tocsr()
    rhs = F[free] - K[free] @ space.lift
    return SparseSystem(Kff, rhs, symmetric, space, K)


def _coef_per_cell(problem, mesh, cells, rule):
    x = _cell_points(mesh, cells, rule).reshape(-1, mesh.dim)
    A = problem.coef(x)
    g = np.trace(A, axis1=1, axis2=2) / np.sum(A * A, axis=(1, 2))
    M = (g[:, None, None] * A).reshape(cells.size, rule.size, mesh.dim, mesh.dim)
    return M


def assemble_nondivergence(space, problem, quad_degree=None, rhs_quad_degree=None):
    """System of ``int (gamma A : D2 u) Lap v = int gamma f Lap v`` over the
    free DOFs (rows: test functions)."""
    if problem.kind != "nondivergence":
        raise InvalidArgumentError("problem is not of nondivergence kind")
    mesh, spec = space.mesh, space.spec
    d = mesh.dim
    deg = _check_degree(space, quad_degree)
    rule = rule_simplex(d, deg)
    R = _rtensor(spec, rule)
    href = _reference_hessians(spec, rule)
    S = len(spec.polyset)
    frule = rule_simplex(d, rhs_quad_degree or max(rhs_degree(spec), deg))
    fref = _reference_hessians(spec, frule)
    N = spec.ndofs
    Kloc = np.zeros((mesh.n_cells, N, N))
    Floc = np.zeros((mesh.n_cells, N))
    for start in range(0, mesh.n_cells, CHUNK):
        cells = np.arange(start, min(start + CHUNK, mesh.n_cells))
        B = mesh.jac_inv[cells]
        G = np.matmul(B, np.swapaxes(B, 1, 2))
        det = _detj(mesh, cells)
        M = _coef_per_cell(problem, mesh, cells, rule)
        const = np.all(np.abs(M - M[:, :1]) <= 1e-13 * np.abs(M[:, :1]).max(axis=(2, 3), keepdims=True), axis=(1, 2, 3))
        Ks = np.zeros((cells.size, S, S))
        if const.any():
            ci = np.flatnonzero(const)
            BMB = np.matmul(np.matmul(B[ci], M[ci, 0]), np.swapaxes(B[ci], 1, 2))
            # W[(test kl), (trial ij)] = G_kl (B M B^T)_ij
            W = np.einsum("ckl,cij->cklij", G[ci], BMB).reshape(ci.size, -1)
            Ks[ci] = (W @ R.T).reshape(ci.size, S, S) * det[ci, None, None]
        if (~const).any():
            ci = np.flatnonzero(~const)
            BMB = np.matmul(np.matmul(B[ci, None], M[ci]), np.swapaxes(B[ci], 1, 2)[:, None])
            lap = np.einsum("sqkl,ckl->csq", href, G[ci], optimize=True)
            trial = np.einsum("sqij,cqij->csq", href, BMB, optimize=True)
            Ks[ci] = np.einsum("q,csq,ctq->cst", rule.weights, lap, trial, optimize=True) * det[ci, None, None]
        Kloc[cells] = _to_nodal(space, cells, Ks)
        # right-hand side
        x = _cell_points(mesh, cells, frule).reshape(-1, d)
        gf = (problem.gamma(x) * problem.rhs(x)).reshape(cells.size, frule.size)
        lapf = np.einsum("sqkl,ckl->csq", fref, G, optimize=True)
        Fs = np.einsum("q,cq,csq->cs", frule.weights, gf, lapf, optimize=True) * det[:, None]
        Floc[cells] = np.einsum("cks,cs->ck", space.basis.C[cells], Fs)
    sym = False
    return _finish(space, Kloc, Floc, sym)


def assemble_biharmonic(space, problem, quad_degree=None, rhs_quad_degree=None):
    """System of ``int D2 u : D2 v = int f v`` over the free DOFs."""
    if problem.kind != "biharmonic":
        raise InvalidArgumentError("problem is not of biharmonic kind")
    mesh, spec = space.mesh, space.spec
    d = mesh.dim
    deg = _check_degree(space, quad_degree)
    rule = rule_simplex(d, deg)
    R = _rtensor(spec, rule)
    S = len(spec.polyset)
    frule = rule_simplex(d, rhs_quad_degree or max(rhs_degree(spec), deg))
    fval, _, _ = spec.polyset.tabulate(frule.points)
    N = spec.ndofs
    Kloc = np.zeros((mesh.n_cells, N, N))
    Floc = np.zeros((mesh.n_cells, N))
    for start in range(0, mesh.n_cells, CHUNK):
        cells = np.arange(start, min(start + CHUNK, mesh.n_cells))
        B = mesh.jac_inv[cells]
        G = np.matmul(B, np.swapaxes(B, 1, 2))
        det = _detj(mesh, cells)
        # W[(ij), (kl)] = G_ik G_jl
        W = np.einsum("cik,cjl->cijkl", G, G).reshape(cells.size, -1)
        Ks = (W @ R.T).reshape(cells.size, S, S) * det[:, None, None]
        Kloc[cells] = _to_nodal(space, cells, Ks)
        x = _cell_points(mesh, cells, frule).reshape(-1, d)
        f = problem.rhs(x).reshape(cells.size, frule.size)
        Fs = (f * frule.weights) @ fval.T * det[:, None]
        Floc[cells] = np.einsum("cks,cs->ck", space.basis.C[cells], Fs)
    Kloc = 0.5 * (Kloc + np.swapaxes(Kloc, 1, 2))
    return _finish(space, Kloc, Floc, True)


def assemble(space, problem, quad_degree=None):
    if problem.kind == "biharmonic":
        return assemble_biharmonic(space, problem, quad_degree)
    return assemble_nondivergence(space, problem, quad_degree)


# ---------------------------------------------------------------------------
# solvers


def solve(system, method="direct", rtol=1e-10, restart=200, maxiter=2000):
    """Solve a :class:`SparseSystem`; returns the free-DOF vector.

    ``direct`` uses a sparse LU factorization with a fill-reducing column
    ordering (a symmetric ordering and no pivoting preference when the
    system is symmetric); ``iterative`` uses restarted GMRES preconditioned
    by an incomplete LU factorization.
    """
    A = system.matrix.tocsc() if sps.issparse(system.matrix) else sps.csc_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    # symmetric diagonal equilibration: graded meshes and the h-scaled
    # derivative DOFs spread the diagonal over many orders of magnitude
    dg = np.abs(A.diagonal())
    dg[dg == 0.0] = 1.0
    S = sps.diags(1.0 / np.sqrt(dg))
    As = (S @ A @ S).tocsc()
    bs = S @ b
    if method == "direct":
        # The sparsity pattern is always structurally symmetric, so a
        # symmetric fill-reducing ordering with diagonal pivots is tried
        # first; unsymmetric systems fall back to partial pivoting when the
        # residual is poor.
        attempts = [("MMD_AT_PLUS_A", {"diag_pivot_thresh": 0.0, "options": {"SymmetricMode": True}})]
        if not system.symmetric:
            attempts.append(("COLAMD", {}))
        for permc, kw in attempts:
            try:
                lu = spla.splu(As, permc_spec=permc, **kw)
            except RuntimeError as exc:
                last = SolverError(f"direct factorization failed: {exc}", 0.0)
                continue
            udiag = np.abs(lu.U.diagonal())
            piv = float(udiag.min()) if udiag.size else 0.0
            if not np.isfinite(piv) or piv <= 1e-14 * float(udiag.max()):
                last = SolverError(f"matrix is numerically singular (smallest pivot {piv:.3e})", piv)
                continue
            y = lu.solve(bs)
            res = np.linalg.norm(As @ y - bs) / max(np.linalg.norm(bs), 1e-300)
            if res > rtol:
                y = y + lu.solve(bs - As @ y)
                res = np.linalg.norm(As @ y - bs) / max(np.linalg.norm(bs), 1e-300)
            if res <= 1e-8:
                return S @ y
            last = SolverError(f"direct solve residual {res:.3e} too large", piv)
        raise last
    if method == "iterative":
        history = []
        try:
            ilu = spla.spilu(As, drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            raise SolverError(f"incomplete factorization failed: {exc}") from exc
        M = spla.LinearOperator(A.shape, ilu.solve)
        y, info = spla.gmres(
            As, bs, M=M, rtol=rtol, atol=0.0, restart=restart, maxiter=maxiter,
            callback=lambda r: history.append(float(r)), callback_type="pr_norm",
        )
        if info != 0:
            raise SolverError(f"GMRES did not converge (info={info})", residuals=history)
        return S @ y
    raise InvalidArgumentError(f"unknown solver {method!r}")


def residual_norm(system, x):
    b = system.rhs
    return float(np.linalg.norm(system.matrix @ x - b) / max(np.linalg.norm(b), 1e-300))


# ---------------------------------------------------------------------------
# errors and indicators


def _integrate_cells(space, full, func_of_points, degree):
    """Yield per-chunk cell data at quadrature points for norm integrals."""
    from .femspace import eval_global

    mesh = space.mesh
    d = mesh.dim
    rule = rule_simplex(d, degree)
    for start in range(0, mesh.n_cells, CHUNK):
        cells = np.arange(start, min(start + CHUNK, mesh.n_cells))
        v, _, H = eval_global(space, full, cells, rule.points)
        x = _cell_points(mesh, cells, rule)
        ex = func_of_points(x.reshape(-1, d))
        w = rule.weights[None, :] * _detj(mesh, cells)[:, None]
        yield cells, v, H, ex, w, x


def error_norms(space, full, exact, degree=None):
    """Relative L2 and broken H2-seminorm errors of ``full`` against
    ``exact`` (value, gradient, Hessian callable)."""
    degree = degree or rhs_degree(space.spec)
    e0 = n0 = e2 = n2 = 0.0
    for cells, v, H, ex, w, _ in _integrate_cells(space, full, exact, degree):
        u, _, D2 = ex
        nc, Q = v.shape
        u = u.reshape(nc, Q)
        D2 = D2.reshape(nc, Q, space.mesh.dim, space.mesh.dim)
        e0 += float(np.sum(w * (u - v) ** 2))
        n0 += float(np.sum(w * u**2))
        e2 += float(np.sum(w * np.sum((D2 - H) ** 2, axis=(2, 3))))
        n2 += float(np.sum(w * np.sum(D2**2, axis=(2, 3))))
    if n0 == 0.0 or n2 == 0.0:
        raise InvalidArgumentError("exact solution has zero norm; relative errors undefined")
    return np.sqrt(e0 / n0), np.sqrt(e2 / n2)


def eta_indicator(space, full, problem, degree=None):
    """Per-cell residuals ``||f - A : D2 u_h||_{L2(T)}`` and their
    root-sum-square."""
    if problem.kind != "nondivergence":
        raise InvalidArgumentError("the residual indicator is defined for nondivergence problems")
    degree = degree or rhs_degree(space.spec)
    eta = np.zeros(space.mesh.n_cells)
    d = space.mesh.dim

    def data(x):
        return problem.rhs(x), problem.coef(x)

    for cells, v, H, ex, w, _ in _integrate_cells(space, full, data, degree):
        f, A = ex
        nc, Q = v.shape
        r = f.reshape(nc, Q) - np.einsum("cqab,cqab->cq", A.reshape(nc, Q, d, d), H)
        eta[cells] = np.sqrt(np.sum(w * r**2, axis=1))
    return eta, float(np.sqrt(np.sum(eta**2)))


def broken_norms(space, full, degree=None):
    """Squared broken L2 norms of the Laplacian and of the Hessian."""
    degree = degree or space.spec.default_quad_degree
    lap2 = hess2 = 0.0
    for cells, v, H, ex, w, _ in _integrate_cells(space, full, lambda x: None, degree):
        lap2 += float(np.sum(w * np.trace(H, axis1=2, axis2=3) ** 2))
        hess2 += float(np.sum(w * np.sum(H**2, axis=(2, 3))))
    return lap2, hess2


def solve_problem(space, problem, method="direct", quad_degree=None):
    """Assemble, solve and return ``(full vector, system, seconds)``."""
    t0 = time.perf_counter()
    if problem.inhomogeneous:
        space.set_boundary_values(problem.exact)
    system = assemble(space, problem, quad_degree)
    x = solve(system, method)
    full = space.expand(x)
    return full, system, time.perf_counter() - t0
