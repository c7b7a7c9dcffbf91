"""Polynomials in barycentric coordinates and the special bubble functions.

All constructions work on a single simplex whose local vertices are listed in
ascending global order, so that "higher endpoint" and face orderings are the
same for every cell sharing an entity.  Coefficients are either
:class:`fractions.Fraction` (exact mode, default) or ``float``.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import comb, factorial

import numpy as np
import scipy.linalg

from . import kernels
from .errors import ConditioningError, InvalidArgumentError
from .quadrature import homogeneous_exponents

COND_LIMIT = 1e12


def _is_zero(c):
    return c == 0


@lru_cache(maxsize=None)
def _sum_power(nvars, k):
    """Multinomial expansion of (lambda_0 + ... + lambda_{n-1})^k."""
    out = {}
    for e in homogeneous_exponents(nvars, k):
        c = factorial(k)
        for a in e:
            c //= factorial(a)
        out[e] = c
    return out


class BaryPoly:
    """Polynomial in the ``nvars`` barycentric coordinates of a simplex.

    Stored as a mapping from exponent tuples to coefficients.  Distinct
    mappings may describe the same function because the coordinates sum to
    one; :meth:`homogenize` produces the unique homogeneous representative.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = nvars
        self.terms = {}
        for e, c in (terms or {}).items():
            if len(e) != nvars or min(e, default=0) < 0:
                raise InvalidArgumentError(f"bad exponent {e} for {nvars} variables")
            if not _is_zero(c):
                self.terms[tuple(e)] = c

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, c, nvars):
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def lam(cls, i, nvars, c=1):
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): c})

    @classmethod
    def monomial(cls, alpha, c=1):
        return cls(len(alpha), {tuple(alpha): c})

    @classmethod
    def product_of(cls, indices, nvars):
        e = [0] * nvars
        for i in indices:
            e[i] += 1
        return cls(nvars, {tuple(e): 1})

    # algebra ----------------------------------------------------------------
    def copy(self):
        return BaryPoly(self.nvars, dict(self.terms))

    def _coerce(self, other):
        if isinstance(other, BaryPoly):
            if other.nvars != self.nvars:
                raise InvalidArgumentError("variable count mismatch")
            return other
        return BaryPoly.constant(other, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return BaryPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return BaryPoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, BaryPoly):
            return BaryPoly(self.nvars, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return BaryPoly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        out = BaryPoly.constant(1, self.nvars)
        for _ in range(k):
            out = out * self
        return out

    @property
    def degree(self):
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self):
        return not self.terms

    def diff(self, i):
        """Partial derivative with respect to ``lambda_i`` (as independent
        variables)."""
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                f = tuple(f)
                out[f] = out.get(f, 0) + c * e[i]
        return BaryPoly(self.nvars, out)

    def homogenize(self, degree=None):
        """Equivalent homogeneous polynomial of the given total degree."""
        degree = self.degree if degree is None else degree
        if self.degree > degree:
            raise InvalidArgumentError("cannot homogenize to a lower degree")
        out = {}
        for e, c in self.terms.items():
            for f, m in _sum_power(self.nvars, degree - sum(e)).items():
                g = tuple(a + b for a, b in zip(e, f))
                out[g] = out.get(g, 0) + c * m
        return BaryPoly(self.nvars, out)

    def equals(self, other, tol=0.0):
        """Equality as functions on the simplex."""
        d = max(self.degree, other.degree, 0)
        diff = (self - other).homogenize(d)
        return all(abs(c) <= tol for c in diff.terms.values())

    def restrict(self, entity):
        """Trace on the sub-simplex spanned by local vertices ``entity``."""
        entity = list(entity)
        others = [i for i in range(self.nvars) if i not in entity]
        out = {}
        for e, c in self.terms.items():
            if any(e[i] for i in others):
                continue
            f = tuple(e[i] for i in entity)
            out[f] = out.get(f, 0) + c
        return BaryPoly(len(entity), out)

    def embed(self, entity, nvars):
        """Inverse of :meth:`restrict`: reinterpret a polynomial in entity
        coordinates as one in the ``nvars`` cell coordinates."""
        out = {}
        for e, c in self.terms.items():
            f = [0] * nvars
            for a, i in zip(e, entity):
                f[i] = a
            out[tuple(f)] = c
        return BaryPoly(nvars, out)

    def mean(self):
        """Average over the simplex (dimension ``nvars - 1``), exactly."""
        d = self.nvars - 1
        total = 0
        for e, c in self.terms.items():
            num = factorial(d)
            for a in e:
                num *= factorial(a)
            total += c * Fraction(num, factorial(sum(e) + d))
        return total

    def to_float(self):
        return BaryPoly(self.nvars, {e: float(c) for e, c in self.terms.items()})

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(points.shape[0])
        for e, c in self.terms.items():
            out += float(c) * np.prod(points ** np.array(e), axis=1)
        return out

    def __repr__(self):
        return f"BaryPoly({self.nvars}, {len(self.terms)} terms, degree {self.degree})"


def bubble(entity, nvars):
    """Product of the barycentric coordinates of the vertices in ``entity``."""
    return BaryPoly.product_of(entity, nvars)


# ---------------------------------------------------------------------------
# linear algebra helper


def solve_dense(A, B, exact, context=""):
    """Solve ``A X = B`` exactly over the rationals or in floating point.

    Floating-point solves use a partially pivoted LU factorization and
    raise :class:`ConditioningError` when ``cond(A) > 1e12``.
    """
    if exact:
        import sympy

        As = sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in row] for row in A])
        Bs = sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in row] for row in B])
        X = As.LUsolve(Bs)
        return [[Fraction(int(sympy.numer(x)), int(sympy.denom(x))) for x in X.row(i)] for i in range(X.rows)]
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConditioningError(f"ill-conditioned system ({context}): cond = {cond:.3e}", cond, context)
    lu = scipy.linalg.lu_factor(A)
    return scipy.linalg.lu_solve(lu, B).tolist()


def _num(x, exact):
    return Fraction(x) if exact else float(x)


# ---------------------------------------------------------------------------
# physical derivatives


def barycentric_gradients(vertices):
    """Constant gradients of the barycentric coordinates of a simplex.

    Returns an ``(d+1, d)`` array whose row ``i`` is grad(lambda_i).
    """
    vertices = np.asarray(vertices, dtype=float)
    J = (vertices[1:] - vertices[0]).T
    B = np.linalg.inv(J)
    return np.vstack([-B.sum(axis=0), B])


def eval_derivatives(p, vertices, points):
    """Value, physical gradient and physical Hessian of ``p``.

    Parameters
    ----------
    p : BaryPoly
    vertices : (d+1, d) array
        Cell vertices, in the order the barycentric coordinates refer to.
    points : (P, d+1) array
        Barycentric evaluation points.
    """
    G = barycentric_gradients(vertices)
    ps = PolySet([p])
    val, d1, d2 = ps.tabulate_lambda(points)
    grad = np.einsum("pi,ia->pa", d1[0], G)
    hess = np.einsum("pij,ia,jb->pab", d2[0], G, G)
    return val[0], grad, hess


class PolySet:
    """A list of polynomials compiled to a dense coefficient matrix over a
    common homogeneous monomial basis, for fast tabulation."""

    def __init__(self, polys):
        polys = list(polys)
        self.nvars = polys[0].nvars
        self.degree = max(max(p.degree for p in polys), 0)
        self.exponents = np.array(homogeneous_exponents(self.nvars, self.degree), dtype=np.int64)
        index = {tuple(e): k for k, e in enumerate(self.exponents.tolist())}
        self.coeffs = np.zeros((len(polys), len(index)))
        for r, p in enumerate(polys):
            for e, c in p.homogenize(self.degree).terms.items():
                self.coeffs[r, index[e]] = float(c)

    def __len__(self):
        return self.coeffs.shape[0]

    def tabulate_lambda(self, points):
        """Values ``(S, P)`` and lambda-derivatives ``(S, P, n)``,
        ``(S, P, n, n)``."""
        val, d1, d2 = kernels.tabulate_monomials(points, self.exponents)
        C = self.coeffs
        P, m, n = d1.shape
        d1 = np.moveaxis(d1, 1, 0).reshape(m, -1)
        d2 = np.moveaxis(d2, 1, 0).reshape(m, -1)
        return (
            C @ val.T,
            (C @ d1).reshape(-1, P, n),
            (C @ d2).reshape(-1, P, n, n),
        )

    def tabulate(self, points):
        """Values and derivatives in reference coordinates
        ``xhat_a = lambda_a`` (a = 1..d), ``lambda_0 = 1 - sum(xhat)``."""
        val, d1, d2 = self.tabulate_lambda(points)
        g = d1[..., 1:] - d1[..., :1]
        h = d2[..., 1:, 1:] - d2[..., 1:, :1] - d2[..., :1, 1:] + d2[..., :1, :1]
        return val, g, h


# ---------------------------------------------------------------------------
# 2D special polynomials


def specht_bubbles(exact=True):
    """The three quintic second-order Specht bubbles on a triangle,
    ``2 b_T (5 (l_i - l_i^2 - 2 l_{i-1} l_{i+1}) - 1)``."""
    one = _num(1, exact)
    bT = bubble((0, 1, 2), 3)
    out = []
    for i in range(3):
        li = BaryPoly.lam(i, 3, one)
        lm = BaryPoly.lam((i - 1) % 3, 3, one)
        lp = BaryPoly.lam((i + 1) % 3, 3, one)
        out.append(bT * (2 * one) * ((li - li * li - lm * lp * 2) * 5 - one))
    return out


def _beta(a, b):
    """int_0^1 s^a (1 - s)^b ds as an exact fraction."""
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 1))


def _edge_endpoint(i):
    """Local index of the higher endpoint of the triangle edge opposite i."""
    return max(j for j in range(3) if j != i)


def _univariate_orthogonal(top, lower, weight_a, weight_b, exact, context):
    """Coefficients c_0..c_{lower} such that s^top + sum c_k s^k is orthogonal
    to P_lower on [0,1] under the weight s^a (1-s)^b."""
    n = lower + 1
    A = [[_beta(j + k + weight_a, weight_b) for k in range(n)] for j in range(n)]
    B = [[-_beta(j + top + weight_a, weight_b)] for j in range(n)]
    if not exact:
        A = [[float(x) for x in r] for r in A]
        B = [[float(x) for x in r] for r in B]
    X = solve_dense(A, B, exact, context)
    return [X[k][0] for k in range(n)]


def edge_orth_psi(ell, i, exact=True):
    """Polynomial ``psi_i`` of degree ``ell - 3`` in the coordinate ``w`` of the
    higher endpoint of the edge opposite vertex ``i``, orthogonal on that
    edge to ``P_{ell-4}`` under the weight ``b_F^2``."""
    if ell < 4 or ell % 2:
        raise InvalidArgumentError("edge_orth_psi needs an even ell >= 4")
    w = _edge_endpoint(i)
    c = _univariate_orthogonal(ell - 3, ell - 4, 2, 2, exact, "edge_orth_psi")
    one = _num(1, exact)
    lw = BaryPoly.lam(w, 3, one)
    psi = lw ** (ell - 3)
    for k, ck in enumerate(c):
        psi = psi + (lw**k) * ck
    return psi


def edge_test_phi(ell, exact=True):
    """Monic degree-``ell-2`` polynomial on an edge, orthogonal to
    ``P_{ell-3}`` under the weight ``b_F``.  Returned in the two edge
    coordinates; it only involves the second one."""
    if ell < 4 or ell % 2:
        raise InvalidArgumentError("edge_test_phi needs an even ell >= 4")
    c = _univariate_orthogonal(ell - 2, ell - 3, 1, 1, exact, "edge_test_phi")
    one = _num(1, exact)
    s = BaryPoly.lam(1, 2, one)
    phi = s ** (ell - 2)
    for k, ck in enumerate(c):
        phi = phi + (s**k) * ck
    return phi


def psi_bubbles(ell, exact=True):
    """``b_T b_{F_i} psi_i`` for the three edges of a triangle."""
    bT = bubble((0, 1, 2), 3)
    out = []
    for i in range(3):
        bF = bubble([j for j in range(3) if j != i], 3)
        out.append(bT * bF * edge_orth_psi(ell, i, exact))
    return out


# ---------------------------------------------------------------------------
# 3D face systems and bubbles


@dataclass(frozen=True)
class FaceOrthoSystem:
    """Face polynomials used to build the 3D bubbles of one local face.

    ``phi`` spans P_{ell-4}(F); ``varphi`` are the ``2 ell - 3`` degree
    ``ell-2`` polynomials orthogonal to ``b_F P_{ell-4}(F)``; ``tilde_phi``
    lie in ``X_F`` and are ``b_F^2``-dual to ``phi`` while orthogonal to
    ``varphi``.  All are polynomials in the three face coordinates, which
    are the cell coordinates ``face_vertices`` in that order.
    """

    ell: int
    face: int
    face_vertices: tuple
    phi: tuple
    varphi: tuple
    tilde_phi: tuple

    @property
    def n_low(self):
        return len(self.phi)


def _face_lagrange_space(k, exact):
    """Lagrange basis functions of P_k(T) attached to nodes on a face, as
    polynomials in the three face coordinates (they do not involve the
    coordinate of the opposite vertex)."""
    one = _num(1, exact)
    out = []
    for alpha in homogeneous_exponents(3, k):
        L = BaryPoly.constant(one, 3)
        for i, a in enumerate(alpha):
            for j in range(a):
                L = L * ((BaryPoly.lam(i, 3, one) * k - j) * (one / (j + 1)))
        out.append(L)
    return out


@lru_cache(maxsize=None)
def face_ortho_system(ell, face, exact=True):
    """Build the face system for the local face opposite vertex ``face`` of
    a tetrahedron."""
    if ell < 5:
        raise InvalidArgumentError("3D face systems need ell >= 5")
    one = _num(1, exact)
    fv = tuple(i for i in range(4) if i != face)
    bF = bubble((0, 1, 2), 3)
    bF2 = bF * bF
    phi = [BaryPoly.monomial(a, one) for a in homogeneous_exponents(3, ell - 4)]
    n_low = len(phi)

    # extension monomials x^a y^b, ell-3 <= a+b <= ell-2, in the last two face coords
    ext = []
    for tot in (ell - 3, ell - 2):
        for a in range(tot, -1, -1):
            ext.append(BaryPoly.monomial((0, a, tot - a), one))
    G = [[(bF * p * q).mean() for q in phi] for p in phi]
    R = [[(bF * p * m).mean() for m in ext] for p in phi]
    if not exact:
        G = [[float(x) for x in r] for r in G]
        R = [[float(x) for x in r] for r in R]
    X = solve_dense(G, R, exact, "face_ortho_system: varphi")
    varphi = []
    for col, m in enumerate(ext):
        v = m
        for j, p in enumerate(phi):
            v = v - p * X[j][col]
        varphi.append(v)

    lag = _face_lagrange_space(ell - 2, exact)
    tests = phi + varphi
    S = [[(bF2 * L * t).mean() for t in tests] for L in lag]
    # D S = [I | 0]  <=>  S^T D^T = [I | 0]^T
    ST = [[S[r][t] for r in range(len(lag))] for t in range(len(tests))]
    rhs = [[one if (t == i) else 0 * one for i in range(n_low)] for t in range(len(tests))]
    if not exact:
        ST = [[float(x) for x in r] for r in ST]
        rhs = [[float(x) for x in r] for r in rhs]
    D = solve_dense(ST, rhs, exact, "face_ortho_system: tilde_phi")
    tilde = []
    for i in range(n_low):
        t = BaryPoly(3)
        for r, L in enumerate(lag):
            t = t + L * D[r][i]
        tilde.append(t)
    return FaceOrthoSystem(ell, face, fv, tuple(phi), tuple(varphi), tuple(tilde))


@lru_cache(maxsize=None)
def face_bubbles(ell, face, exact=True):
    """All ``N_{ell-4}`` bubbles ``xi_i^F = b_T b_F tilde_phi_i - q_i`` of the
    face opposite local vertex ``face``; ``q_i in b_T^2 P_{ell-4}(T)`` removes
    the volume moments against ``P_{ell-4}(T)``."""
    fos = face_ortho_system(ell, face, exact)
    one = _num(1, exact)
    bT = bubble(range(4), 4)
    bF = bubble(fos.face_vertices, 4)
    low = [BaryPoly.monomial(a, one) for a in homogeneous_exponents(4, ell - 4)]
    bT2 = bT * bT
    M = [[(bT2 * p * q).mean() for p in low] for q in low]
    zetas = [bT * bF * t.embed(fos.face_vertices, 4) for t in fos.tilde_phi]
    R = [[(z * q).mean() for z in zetas] for q in low]
    if not exact:
        M = [[float(x) for x in r] for r in M]
        R = [[float(x) for x in r] for r in R]
    C = solve_dense(M, R, exact, "face_bubbles: volume correction")
    out = []
    for i, z in enumerate(zetas):
        q = BaryPoly(4)
        for k, p in enumerate(low):
            q = q + p * C[k][i]
        out.append(z - bT2 * q)
    return tuple(out)


def bubble_3d(ell, face, i, exact=True):
    return face_bubbles(ell, face, exact)[i]


def plain_monomials(nvars, degree, exact=True):
    """Homogeneous barycentric monomials of ``degree``: a basis of P_degree."""
    one = _num(1, exact)
    return [BaryPoly.monomial(a, one) for a in homogeneous_exponents(nvars, degree)]


def dim_p(k, dim):
    """Dimension of P_k in ``dim`` variables (0 for k < 0)."""
    return comb(k + dim, dim) if k >= 0 else 0


def sub_entities(dim, k):
    """Local sub-entities of dimension ``k`` of a ``dim``-simplex, as sorted
    tuples of local vertex indices, in lexicographic order."""
    return list(combinations(range(dim + 1), k + 1))
