"""Collapsed Gauss--Jacobi quadrature on simplices and L2 projection.

Rules are stored in barycentric coordinates of the reference simplex, so the
same rule serves a cell, any of its faces, or an edge once the barycentric
points are scattered into the cell's coordinate slots (:func:`embed_points`).
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

from .errors import InternalError, InvalidArgumentError, UnsupportedError

MAX_DEGREE = 40


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature rule on the reference ``dim``-simplex.

    ``points`` holds barycentric coordinates of shape ``(npts, dim + 1)``;
    the weights sum to the reference measure ``1 / dim!``.
    """

    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return self.weights.size

    @property
    def mean_weights(self):
        """Weights normalised to one, for averages over an entity."""
        return self.weights * factorial(self.dim)


def reference_moment(alpha):
    """Exact integral of the barycentric monomial ``lambda^alpha`` over the
    reference simplex of dimension ``len(alpha) - 1``.

    Uses ``int_T lambda^alpha = d! alpha! |T| / (|alpha| + d)!`` with
    ``|T| = 1/d!``.
    """
    d = len(alpha) - 1
    num = 1
    for a in alpha:
        num *= factorial(a)
    return num / factorial(sum(alpha) + d)


def homogeneous_exponents(nvars, degree):
    """All exponent tuples with ``nvars`` entries summing to ``degree``, in
    lexicographically decreasing order."""
    out = []
    for combo in combinations_with_replacement(range(nvars), degree):
        e = [0] * nvars
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    return out


def _gauss_jacobi01(n, a):
    """n-point rule on [0, 1] for the weight (1 - u)^a."""
    x, w = roots_jacobi(n, a, 0)
    return (1.0 + x) / 2.0, w / 2.0 ** (a + 1)


def _build(dim, degree):
    n = max(1, (degree + 2) // 2)
    if dim == 0:
        return np.ones((1, 1)), np.ones(1)
    if dim == 1:
        u, w = _gauss_jacobi01(n, 0)
        return np.column_stack([1.0 - u, u]), w
    if dim == 2:
        u, wu = _gauss_jacobi01(n, 1)
        v, wv = _gauss_jacobi01(n, 0)
        U, V = np.meshgrid(u, v, indexing="ij")
        x1 = U.ravel()
        x2 = (V * (1.0 - U)).ravel()
        w = np.outer(wu, wv).ravel()
        return np.column_stack([1.0 - x1 - x2, x1, x2]), w
    if dim == 3:
        u, wu = _gauss_jacobi01(n, 2)
        v, wv = _gauss_jacobi01(n, 1)
        t, wt = _gauss_jacobi01(n, 0)
        U, V, T = np.meshgrid(u, v, t, indexing="ij")
        x1 = U.ravel()
        x2 = (V * (1.0 - U)).ravel()
        x3 = (T * (1.0 - U) * (1.0 - V)).ravel()
        w = (wu[:, None, None] * wv[None, :, None] * wt[None, None, :]).ravel()
        return np.column_stack([1.0 - x1 - x2 - x3, x1, x2, x3]), w
    raise UnsupportedError(f"simplex dimension {dim} is not supported")


def check_exactness(rule, tol=1e-12, chunk=2048):
    """Largest relative deviation from the monomial moment formula over all
    barycentric monomials of total degree ``rule.degree`` (these span all
    polynomials of lower degree as well)."""
    alphas = np.array(homogeneous_exponents(rule.dim + 1, rule.degree), dtype=float)
    exact = np.array([reference_moment(tuple(int(a) for a in al)) for al in alphas])
    # the points are strictly interior, so monomials can be formed in log space
    logp = np.log(rule.points).T
    worst = 0.0
    for start in range(0, len(alphas), chunk):
        A = alphas[start : start + chunk]
        approx = np.exp(A @ logp) @ rule.weights
        ex = exact[start : start + chunk]
        worst = max(worst, float(np.max(np.abs(approx - ex) / ex)))
    if worst > tol:
        raise InternalError(f"quadrature rule (dim={rule.dim}, degree={rule.degree}) not exact: {worst:.2e}")
    return worst


@lru_cache(maxsize=None)
def rule_simplex(dim, degree):
    """Quadrature rule exact for polynomials of total degree ``<= degree``."""
    if degree < 0:
        raise InvalidArgumentError("quadrature degree must be non-negative")
    if degree > MAX_DEGREE:
        raise UnsupportedError(f"quadrature degree {degree} exceeds limit {MAX_DEGREE}")
    pts, w = _build(dim, degree)
    pts.setflags(write=False)
    w.setflags(write=False)
    rule = QuadratureRule(dim, degree, pts, w)
    if dim > 0:
        check_exactness(rule)
    return rule


def embed_points(points, entity, nvars):
    """Scatter barycentric points of a sub-entity into cell coordinates.

    ``entity`` lists the local cell vertices spanning the sub-entity, in the
    order matching the columns of ``points``.
    """
    out = np.zeros((points.shape[0], nvars))
    out[:, list(entity)] = points
    return out


def project_l2(degree, vertices, f, quad_degree=None):
    """L2-orthogonal projection of ``f`` onto polynomials of ``degree`` over
    the simplex spanned by ``vertices``.

    Parameters
    ----------
    degree : int
        Target polynomial degree ``m``.
    vertices : (k+1, D) array
        Simplex vertices in physical space; ``k`` may be smaller than ``D``
        (faces, edges).
    f : callable
        Maps physical points ``(npts, D)`` to values ``(npts,)``.
    quad_degree : int, optional
        Exactness degree of the rule used for the Gram and moment integrals.
        Defaults to ``2 * degree + 6``.

    Returns
    -------
    coeffs : (N,) array
        Coefficients with respect to ``basis``.
    basis : list of tuple
        Homogeneous barycentric exponents of degree ``m`` spanning ``P_m``.
    """
    vertices = np.asarray(vertices, dtype=float)
    k = vertices.shape[0] - 1
    rule = rule_simplex(k, quad_degree if quad_degree is not None else 2 * degree + 6)
    basis = homogeneous_exponents(k + 1, degree)
    E = np.array(basis)
    phi = np.prod(rule.points[:, None, :] ** E[None, :, :], axis=2)  # (Q, N)
    x = rule.points @ vertices
    fx = np.asarray(f(x), dtype=float)
    G = phi.T @ (rule.weights[:, None] * phi)
    rhs = phi.T @ (rule.weights * fx)
    try:
        return np.linalg.solve(G, rhs), basis
    except np.linalg.LinAlgError as exc:  # pragma: no cover - Gram of a basis is SPD
        raise InternalError("singular Gram matrix in L2 projection") from exc


def evaluate_projection(coeffs, basis, bary_points):
    E = np.array(basis)
    return np.prod(np.asarray(bary_points)[:, None, :] ** E[None, :, :], axis=2) @ coeffs
