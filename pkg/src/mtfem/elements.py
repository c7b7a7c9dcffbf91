"""Element definitions: degrees of freedom, shape spaces and nodal bases.

Every shape function is a fixed barycentric polynomial of a cell whose local
vertices are sorted by global index.  A degree of freedom applied to a shape
function depends on the cell geometry only through a few direction vectors
(Cartesian axes, entity normals) mapped by ``B = J^{-1}``, so the generalized
Vandermonde matrix of a cell is assembled from geometry-independent reference
tensors::

    V[j, s] = scale_j * (alpha[j, s] + beta[j, s] . (B u_j)
                          + (B u_j)^T gamma[j, s] (B w_j))

with reference values ``alpha``, gradients ``beta`` and Hessians ``gamma``.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from . import polybasis as pb
from .errors import InvalidArgumentError, UnisolvenceError
from .quadrature import embed_points, homogeneous_exponents, rule_simplex

COND_LIMIT = 1e12

FAMILIES = ("specht2", "v2d", "v3d", "v2d_base")


@dataclass(frozen=True, eq=False)
class DofFunctional:
    """One local degree of freedom.

    ``kind`` is one of ``value``, ``grad``, ``hess``, ``moment`` (average of
    ``v q``) or ``normal`` (average of a normal derivative times ``q``).
    ``entity_dim`` and ``local_entity`` locate the owning sub-entity in the
    cell's canonical list; ``comp`` holds the Cartesian component(s) for
    derivative point values or the normal index for 3D edge moments.
    ``test`` is the moment weight as a polynomial in the entity's barycentric
    coordinates.
    """

    kind: str
    entity_dim: int
    local_entity: int
    pos: int
    comp: tuple = ()
    test: object = None

    @property
    def facet_normal(self):
        return self.kind == "normal" and self.entity_dim >= 1 and self.comp == ()


def _mono(nvars, m):
    return pb.plain_monomials(nvars, m) if m >= 0 else []


@dataclass(eq=False)
class ElementSpec:
    """Shape space and local DOF list of an element family.

    Parameters
    ----------
    family : {"specht2", "v2d", "v3d", "v2d_base"}
        ``v2d_base`` is the 2D base DOF set over plain ``P_ell``, used as a
        non-unisolvent negative control for odd ``ell``.
    ell : int
    """

    family: str
    ell: int
    dim: int = field(init=False)
    shape: list = field(init=False, repr=False)
    dofs: list = field(init=False, repr=False)

    def __post_init__(self):
        f, ell = self.family, self.ell
        if f == "specht2":
            if ell != 2:
                raise InvalidArgumentError("specht2 has ell = 2")
            self.dim = 2
        elif f == "v2d":
            if not (ell == 3 or (ell >= 4 and ell % 2 == 0)):
                raise InvalidArgumentError("v2d needs ell = 3 or an even ell >= 4")
            self.dim = 2
        elif f == "v3d":
            if ell < 5:
                raise InvalidArgumentError("v3d needs ell >= 5")
            self.dim = 3
        elif f == "v2d_base":
            if ell < 4:
                raise InvalidArgumentError("v2d_base needs ell >= 4")
            self.dim = 2
        else:
            raise InvalidArgumentError(f"unknown element family {f!r}")
        self.shape = shape_space(self)
        self.dofs = _dof_list(self)
        if len(self.shape) != len(self.dofs):
            raise InvalidArgumentError(
                f"{self.name}: {len(self.dofs)} functionals for {len(self.shape)} shape functions"
            )
        self.polyset = pb.PolySet(self.shape)
        self.shape_float = [p.to_float() for p in self.shape]
        self.n_per_entity = [0] * (self.dim + 1)
        for dof in self.dofs:
            if dof.local_entity == 0:
                self.n_per_entity[dof.entity_dim] += 1
        self._reference = None

    @property
    def name(self):
        return "specht2" if self.family == "specht2" else f"{self.family}({self.ell})"

    @property
    def ndofs(self):
        return len(self.dofs)

    @property
    def shape_degree(self):
        return self.polyset.degree

    @property
    def default_quad_degree(self):
        return 2 * self.shape_degree

    @property
    def jump_degree(self):
        """Degree of the face polynomials the normal-derivative jump is
        orthogonal to."""
        return 1 if self.family == "specht2" or self.ell == 3 else self.ell - 2

    # ---------------------------------------------------------------------
    def reference_tensors(self):
        """Reference ``alpha, beta, gamma`` of shape ``(N, S)``, ``(N, S, d)``
        and ``(N, S, d, d)``."""
        if self._reference is None:
            self._reference = _reference_tensors(self)
        return self._reference


def shape_space(spec):
    """Shape functions of the element as a list of :class:`BaryPoly`."""
    f, ell = spec.family, spec.ell
    if f == "specht2":
        return _mono(3, 3) + pb.specht_bubbles()[:2]
    if f == "v2d":
        if ell == 3:
            bT = pb.bubble((0, 1, 2), 3)
            return _mono(3, 3) + [bT * pb.bubble([j for j in range(3) if j != i], 3) for i in range(3)]
        return _mono(3, ell) + pb.psi_bubbles(ell)
    if f == "v2d_base":
        return _mono(3, ell)
    if f == "v3d":
        out = _mono(4, ell)
        for face in range(4):
            out += list(pb.face_bubbles(ell, face))
        return out
    raise InvalidArgumentError(f"unknown element family {f!r}")


def _dof_list(spec):
    d, ell, f = spec.dim, spec.ell, spec.family
    out = []

    def add(kind, k, loc, comps=((),), tests=(None,)):
        for c in comps:
            for q in tests:
                pos = sum(1 for x in out if x.entity_dim == k and x.local_entity == loc)
                out.append(DofFunctional(kind, k, loc, pos, c, q))

    grads = [(e,) for e in range(d)]
    hess = [(e, g) for e in range(d) for g in range(e, d)]
    for v in range(d + 1):
        add("value", 0, v)
        add("grad", 0, v, grads)
        if d == 3:
            add("hess", 0, v, hess)
    if d == 2:
        for loc in range(3):
            if f in ("specht2",) or ell == 3:
                add("normal", 1, loc, tests=_mono(2, 0))
                continue
            add("moment", 1, loc, tests=_mono(2, ell - 4))
            add("normal", 1, loc, tests=_mono(2, ell - 4))
            if f == "v2d":
                add("normal", 1, loc, tests=[pb.BaryPoly.monomial((0, ell - 3), pb.Fraction(1))])
        if f == "v2d" and ell == 3:
            add("moment", 2, 0, tests=_mono(3, 0))
        elif f != "specht2" and ell >= 6:
            add("moment", 2, 0, tests=_mono(3, ell - 6))
    else:
        for loc in range(6):
            add("moment", 1, loc, tests=_mono(2, ell - 6))
            add("normal", 1, loc, comps=[(0,), (1,)], tests=_mono(2, ell - 5))
        for loc in range(4):
            add("normal", 2, loc, tests=_mono(3, ell - 4))
            add("moment", 2, loc, tests=_mono(3, ell - 6))
        add("moment", 3, 0, tests=_mono(4, ell - 4))
    # stable order: by entity dimension, local entity, then position
    out.sort(key=lambda x: (x.entity_dim, x.local_entity, x.pos))
    return out


def dof_functionals(spec, mesh=None, cell=None):
    """The local DOF list (identical for every cell by construction)."""
    return list(spec.dofs)


def expected_ndofs(family, ell):
    if family == "specht2":
        return 12
    if family == "v2d" and ell == 3:
        return 13
    if family in ("v2d", "v2d_base"):
        base = comb(ell + 2, 2)
        return base + (3 if family == "v2d" else 0)
    if family == "v3d":
        return comb(ell + 3, 3) + 4 * comb(ell - 2, 2)
    raise InvalidArgumentError(family)


def _local_vertices(spec, dof):
    from itertools import combinations

    return list(combinations(range(spec.dim + 1), dof.entity_dim + 1))[dof.local_entity]


def _reference_tensors(spec):
    d = spec.dim
    ps = spec.polyset
    S = len(ps)
    N = spec.ndofs
    alpha = np.zeros((N, S))
    beta = np.zeros((N, S, d))
    gamma = np.zeros((N, S, d, d))
    for j, dof in enumerate(spec.dofs):
        ent = _local_vertices(spec, dof)
        if dof.entity_dim == 0:
            pts = np.zeros((1, d + 1))
            pts[0, ent[0]] = 1.0
            w = np.ones(1)
            qv = np.ones(1)
        else:
            qdeg = dof.test.degree
            rule = rule_simplex(dof.entity_dim, ps.degree + qdeg)
            pts = embed_points(rule.points, ent, d + 1)
            w = rule.mean_weights
            qv = dof.test(rule.points)
        val, g, h = ps.tabulate(pts)
        wq = w * qv
        if dof.kind in ("value", "moment"):
            alpha[j] = val @ wq
        elif dof.kind in ("grad", "normal"):
            beta[j] = np.einsum("spa,p->sa", g, wq)
        elif dof.kind == "hess":
            gamma[j] = np.einsum("spab,p->sab", h, wq)
    return alpha, beta, gamma


def dof_geometry(spec, mesh, cells=None):
    """Direction vectors and scales of every local DOF on each cell.

    Returns
    -------
    u, w : (nc, N, d) arrays
        Physical directions (gradient/normal direction, second Hessian
        direction).
    scale : (nc, N) array
    gid : (nc, N) array
        Global id of the owning entity.
    """
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    d = spec.dim
    nc = cells.size
    N = spec.ndofs
    u = np.zeros((nc, N, d))
    w = np.zeros((nc, N, d))
    scale = np.ones((nc, N))
    gid = np.zeros((nc, N), dtype=np.int64)
    eye = np.eye(d)
    diam = {k: mesh.entity_diam(k) for k in range(d + 1)}
    for j, dof in enumerate(spec.dofs):
        k = dof.entity_dim
        g = mesh.cell_entities[k][cells, dof.local_entity]
        gid[:, j] = g
        if dof.kind == "grad":
            u[:, j] = eye[dof.comp[0]]
            scale[:, j] = mesh.vertex_h[g]
        elif dof.kind == "hess":
            u[:, j] = eye[dof.comp[0]]
            w[:, j] = eye[dof.comp[1]]
            scale[:, j] = mesh.vertex_h[g] ** 2
        elif dof.kind == "normal":
            if k == d - 1:
                u[:, j] = mesh.facet_normals[g]
            else:
                u[:, j] = mesh.edge_normals[g, dof.comp[0]]
            scale[:, j] = diam[k][g]
    return u, w, scale, gid


def vandermonde(spec, mesh, cells=None):
    """Generalized Vandermonde matrices ``V[c, j, s] = dof_j(shape_s)``."""
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    alpha, beta, gamma = spec.reference_tensors()
    u, w, scale, _ = dof_geometry(spec, mesh, cells)
    B = mesh.jac_inv[cells]
    Bu = np.einsum("cab,cjb->cja", B, u)
    Bw = np.einsum("cab,cjb->cja", B, w)
    V = alpha[None] + np.einsum("jsa,cja->cjs", beta, Bu) + np.einsum("jsab,cja,cjb->cjs", gamma, Bu, Bw)
    return V * scale[:, :, None]


@dataclass(eq=False)
class LocalBasis:
    """Nodal bases of a set of cells.

    ``C[c]`` maps shape functions to nodal basis functions:
    ``basis_k = sum_s C[c, k, s] shape_s``.  ``cond`` is the 1-norm
    condition number of each Vandermonde matrix.
    """

    spec: ElementSpec
    mesh: object
    cells: np.ndarray
    C: np.ndarray
    cond: np.ndarray

    def shape_coeffs(self, local_values):
        """Shape-space coefficients of the functions with the given local DOF
        values, ``(nc, N) -> (nc, S)``."""
        return np.einsum("cks,ck->cs", self.C, local_values)

    def evaluate(self, local_values, bary_points):
        """Values, physical gradients and Hessians at barycentric points."""
        a = self.shape_coeffs(local_values)
        return evaluate_shape(self.spec, self.mesh, self.cells, a, bary_points)


def evaluate_shape(spec, mesh, cells, a, bary_points):
    """Evaluate shape-coefficient vectors ``a`` (nc, S) on cells."""
    val, g, h = spec.polyset.tabulate(bary_points)
    S, P, d = g.shape
    B = mesh.jac_inv[cells]
    v = a @ val
    gr = (a @ g.reshape(S, -1)).reshape(-1, P, d)
    hr = (a @ h.reshape(S, -1)).reshape(-1, P, d, d)
    gr = np.matmul(gr, B)
    hr = np.matmul(np.matmul(np.swapaxes(B, 1, 2)[:, None], hr), B[:, None])
    return v, gr, hr


def nodal_basis(spec, mesh, cells=None, check=True):
    """Invert the Vandermonde matrices of ``cells`` (default: all).

    Raises
    ------
    UnisolvenceError
        If some condition number exceeds ``1e12``.
    """
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    V = vandermonde(spec, mesh, cells)
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError:
        Vinv = None
    if Vinv is None or not np.all(np.isfinite(Vinv)):
        s = np.linalg.svd(V, compute_uv=False)
        bad = int(np.argmin(s[:, -1]))
        raise UnisolvenceError(
            f"{spec.name}: singular Vandermonde on cell {cells[bad]}",
            int(cells[bad]),
            float("inf"),
            float(s[bad, -1]),
        )
    cond = np.abs(V).sum(axis=1).max(axis=1) * np.abs(Vinv).sum(axis=1).max(axis=1)
    if check and np.any(cond > COND_LIMIT):
        bad = int(np.argmax(cond))
        smin = float(np.linalg.svd(V[bad], compute_uv=False)[-1])
        raise UnisolvenceError(
            f"{spec.name}: Vandermonde condition {cond[bad]:.3e} on cell {cells[bad]}",
            int(cells[bad]),
            float(cond[bad]),
            smin,
        )
    return LocalBasis(spec, mesh, cells, np.swapaxes(Vinv, 1, 2).copy(), cond)


def smallest_singular_values(spec, mesh, cells=None):
    V = vandermonde(spec, mesh, cells)
    return np.linalg.svd(V, compute_uv=False)[:, -1]


# ---------------------------------------------------------------------------
# direct evaluation of functionals on physical cells


def apply_functionals(spec, mesh, func, cells=None, extra_degree=4):
    """Apply every local DOF of ``cells`` to a function given in physical
    coordinates.

    ``func(x)`` maps points ``(P, d)`` to ``(value (P,), gradient (P, d),
    Hessian (P, d, d))``.  Moments use quadrature of degree
    ``shape_degree + deg(q) + extra_degree`` on the physical entity, so they
    are exact for polynomials of the shape degree.
    """
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    d = spec.dim
    nc = cells.size
    u, w, scale, _ = dof_geometry(spec, mesh, cells)
    out = np.zeros((nc, spec.ndofs))
    coords = mesh.vertices[mesh.cells[cells]]  # (nc, d+1, d)
    groups = {}
    for j, dof in enumerate(spec.dofs):
        groups.setdefault((dof.entity_dim, dof.local_entity), []).append(j)
    for (k, loc), js in groups.items():
        ent = _local_vertices(spec, spec.dofs[js[0]])
        if k == 0:
            bary = np.ones((1, 1))
            wts = np.ones(1)
        else:
            qdeg = max(spec.dofs[j].test.degree for j in js)
            rule = rule_simplex(k, spec.shape_degree + qdeg + extra_degree)
            bary, wts = rule.points, rule.mean_weights
        x = np.einsum("pi,cia->cpa", bary, coords[:, list(ent)])
        P = bary.shape[0]
        val, grad, hess = func(x.reshape(-1, d))
        val = np.asarray(val).reshape(nc, P)
        grad = np.asarray(grad).reshape(nc, P, d)
        hess = np.asarray(hess).reshape(nc, P, d, d)
        for j in js:
            dof = spec.dofs[j]
            q = wts * (dof.test(bary) if dof.test is not None else 1.0)
            if dof.kind in ("value", "moment"):
                r = val @ q
            elif dof.kind in ("grad", "normal"):
                r = np.einsum("cpa,ca,p->c", grad, u[:, j], q)
            else:
                r = np.einsum("cpab,ca,cb,p->c", hess, u[:, j], w[:, j], q)
            out[:, j] = scale[:, j] * r
    return out


def physical_poly_function(poly, mesh, cell):
    """Wrap a barycentric polynomial of one cell as a physical-space function
    (value, gradient, Hessian) using the cell's barycentric gradients."""
    coords = mesh.vertices[mesh.cells[cell]]
    J = (coords[1:] - coords[0]).T
    Jinv = np.linalg.inv(J)

    def f(x):
        xh = (x - coords[0]) @ Jinv.T
        lam = np.column_stack([1.0 - xh.sum(axis=1), xh])
        return pb.eval_derivatives(poly, coords, lam)

    return f


def biorthogonality_residual(spec, mesh, basis, cell_index):
    """max |dof_j(basis_k) - delta_jk| on one cell, with the functionals
    evaluated directly in physical space on the expanded basis polynomials."""
    c = basis.cells[cell_index]
    polys = []
    for k in range(spec.ndofs):
        p = pb.BaryPoly(spec.dim + 1)
        for s, coef in enumerate(basis.C[cell_index, k]):
            if coef != 0.0:
                p = p + spec.shape_float[s] * float(coef)
        polys.append(p)
    M = np.zeros((spec.ndofs, spec.ndofs))
    for k, p in enumerate(polys):
        M[:, k] = apply_functionals(spec, mesh, physical_poly_function(p, mesh, c), cells=[c])[0]
    return float(np.abs(M - np.eye(spec.ndofs)).max())


def functional_matrix(spec, mesh, cells=None, chunk=16):
    """``D[c, j, s] = dof_j(p_s)`` for every shape polynomial ``p_s``, with
    the functionals applied in physical space (independent of the
    reference tensors used by :func:`vandermonde`)."""
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    d = spec.dim
    pset = pb.PolySet(spec.shape_float)
    S = len(pset)
    D = np.zeros((cells.size, spec.ndofs, S))
    for start in range(0, cells.size, chunk):
        cc = cells[start : start + chunk]
        nc = cc.size
        coords = mesh.vertices[mesh.cells[cc]]
        G = mesh.bary_grads[cc]
        Jinv = np.linalg.inv(np.swapaxes(coords[:, 1:] - coords[:, :1], 1, 2))
        cache = {}

        def tab(x):
            key = (x.shape, x.tobytes())
            if key not in cache:
                xr = x.reshape(nc, -1, d)
                xh = np.einsum("cab,cpb->cpa", Jinv, xr - coords[:, :1])
                lam = np.concatenate([1.0 - xh.sum(axis=2, keepdims=True), xh], axis=2)
                P = lam.shape[1]
                val, d1, d2 = pset.tabulate_lambda(lam.reshape(-1, d + 1))
                d1 = d1.reshape(S, nc, P, d + 1)
                d2 = d2.reshape(S, nc, P, d + 1, d + 1)
                grad = np.einsum("scpi,cia->scpa", d1, G, optimize=True)
                hess = np.einsum("scpij,cia,cjb->scpab", d2, G, G, optimize=True)
                cache[key] = (val, grad.reshape(S, -1, d), hess.reshape(S, -1, d, d))
            return cache[key]

        def make(s):
            def f(x):
                val, grad, hess = tab(x)
                return val[s], grad[s], hess[s]

            return f

        for s in range(S):
            D[start : start + nc, :, s] = apply_functionals(spec, mesh, make(s), cc, extra_degree=0)
    return D


def biorthogonality_residuals(spec, mesh, basis):
    """Per-cell ``max |dof_j(phi_k) - delta_jk|`` for all cells of
    ``basis``, through :func:`functional_matrix`."""
    D = functional_matrix(spec, mesh, basis.cells)
    M = np.matmul(D, np.swapaxes(basis.C, 1, 2))
    return np.abs(M - np.eye(spec.ndofs)).max(axis=(1, 2))


@lru_cache(maxsize=None)
def get_element(family, ell=None):
    """Cached element by family name; ``ell`` defaults per family."""
    if ell is None:
        ell = {"specht2": 2, "v2d": 4, "v3d": 5, "v2d_base": 5}[family]
    return ElementSpec(family, ell)


def parse_element(name):
    """Parse names like ``specht2``, ``v2d3``, ``v2d(4)``, ``v3d5``."""
    s = name.strip().lower().replace("(", "").replace(")", "").replace("_", "")
    if s == "specht2":
        return get_element("specht2", 2)
    for fam in ("v2dbase", "v2d", "v3d"):
        if s.startswith(fam) and s[len(fam):].isdigit():
            return get_element("v2d_base" if fam == "v2dbase" else fam, int(s[len(fam):]))
    raise InvalidArgumentError(f"unknown element {name!r}")
