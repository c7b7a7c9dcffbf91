"""Global finite element spaces, boundary conditions and structural checks.

Global DOFs are keyed by ``(entity dimension, entity id, position)``.  Because
cells use sorted local vertices and all directional functionals are defined
with global directions (Cartesian axes, the fixed facet normal, the fixed
edge frame), two cells sharing an entity produce identical functionals and
coupling is plain identification.
"""

import enum

import numpy as np

from . import elements as el
from .errors import InvalidArgumentError
from .quadrature import embed_points, homogeneous_exponents, rule_simplex


class BcKind(enum.Enum):
    NONE = "none"
    DIRICHLET_H10 = "dirichlet_h10"
    CLAMPED_H20 = "clamped_h20"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError as exc:
            raise InvalidArgumentError(f"unknown boundary condition {value!r}") from exc


def _axes_of(mask, dim):
    """Box facets encoded in a bitmask, as a list of axis indices."""
    return [a for a in range(dim) if mask & (3 << (2 * a))]


class FeSpace:
    """Global space built from an element on a mesh.

    Attributes
    ----------
    l2g : (nc, N) int array
        Local-to-global DOF map.
    ndof : int
        Total number of global DOFs (constrained ones included).
    constrained : (ndof,) bool array
    free : (nfree,) int array
        Global indices of unconstrained DOFs.
    lift : (ndof,) array
        Values imposed on constrained DOFs (zero unless set by
        :meth:`set_boundary_values`).
    basis : LocalBasis
    """

    def __init__(self, mesh, spec, bc=BcKind.NONE, mode="coupled"):
        if spec.dim != mesh.dim:
            raise InvalidArgumentError(f"{spec.name} is a {spec.dim}D element but the mesh is {mesh.dim}D")
        if mode not in ("coupled", "relaxed"):
            raise InvalidArgumentError("mode must be 'coupled' or 'relaxed'")
        self.mesh = mesh
        self.spec = spec
        self.bc = BcKind.parse(bc)
        self.mode = mode
        self._number()
        self.constrained = self._constraints()
        self.free = np.flatnonzero(~self.constrained)
        self.lift = np.zeros(self.ndof)
        self.basis = el.nodal_basis(spec, mesh)

    # -- numbering ------------------------------------------------------------
    def _number(self):
        mesh, spec = self.mesh, self.spec
        d = mesh.dim
        npe = spec.n_per_entity
        base = np.zeros(d + 2, dtype=np.int64)
        for k in range(d + 1):
            base[k + 1] = base[k] + mesh.n_entities(k) * npe[k]
        self.entity_base = base
        nc, N = mesh.n_cells, spec.ndofs
        l2g = np.zeros((nc, N), dtype=np.int64)
        for j, dof in enumerate(spec.dofs):
            gid = mesh.cell_entities[dof.entity_dim][:, dof.local_entity]
            l2g[:, j] = base[dof.entity_dim] + gid * npe[dof.entity_dim] + dof.pos
        total = base[-1]
        if self.mode == "relaxed":
            dup = [j for j, dof in enumerate(spec.dofs) if dof.entity_dim == d - 1 and dof.facet_normal]
            extra = total + np.arange(nc * len(dup)).reshape(nc, len(dup))
            l2g[:, dup] = extra
            used, inv = np.unique(l2g, return_inverse=True)
            l2g = inv.reshape(nc, N)
            total = used.size
        self.l2g = l2g
        self.ndof = int(total)
        # a representative (cell, local dof) for every global DOF
        owner = np.full(self.ndof, -1, dtype=np.int64)
        owner[l2g.ravel()] = np.arange(nc * N)
        self.owner_cell = owner // N
        self.owner_local = owner % N

    def dof_index(self, k, gid, pos):
        """Global index of the DOF at ``pos`` on entity ``gid`` of dimension
        ``k`` (coupled numbering)."""
        if self.mode != "coupled":
            raise InvalidArgumentError("entity keys are only unique in coupled mode")
        return int(self.entity_base[k] + gid * self.spec.n_per_entity[k] + pos)

    # -- boundary conditions -----------------------------------------------------
    def _constraints(self):
        mesh, spec = self.mesh, self.spec
        d = mesh.dim
        out = np.zeros(self.ndof, dtype=bool)
        if self.bc is BcKind.NONE:
            return out
        clamped = self.bc is BcKind.CLAMPED_H20
        c_idx = self.owner_cell
        j_idx = self.owner_local
        for g in range(self.ndof):
            dof = spec.dofs[j_idx[g]]
            k = dof.entity_dim
            gid = mesh.cell_entities[k][c_idx[g], dof.local_entity]
            mask = int(mesh.entity_mask[k][gid])
            if mask == 0 or k == d:
                continue
            axes = _axes_of(mask, d)
            kind = dof.kind
            if kind in ("value", "moment"):
                hit = True
            elif kind == "grad":
                hit = clamped or any(a != dof.comp[0] for a in axes)
            elif kind == "hess":
                e, f = dof.comp
                if clamped:
                    single = bin(mask).count("1") == 1
                    hit = not (single and e == f == axes[0])
                else:
                    hit = any(a not in (e, f) for a in axes)
            elif kind == "normal":
                if clamped:
                    hit = True
                elif k == d - 1:
                    hit = False
                else:
                    n = mesh.edge_normals[gid, dof.comp[0]]
                    hit = any(abs(n[a]) < 1e-12 for a in axes)
            else:  # pragma: no cover
                raise InvalidArgumentError(kind)
            out[g] = hit
        return out

    def apply_bc(self, full):
        """Overwrite constrained entries with the imposed values."""
        out = np.array(full, dtype=float, copy=True)
        out[self.constrained] = self.lift[self.constrained]
        return out

    def set_boundary_values(self, func):
        """Impose inhomogeneous data by interpolating ``func`` (value,
        gradient, Hessian callable) on the constrained DOFs."""
        vals = interpolate(self, func)
        self.lift = np.where(self.constrained, vals, 0.0)

    # -- vectors -------------------------------------------------------------------
    @property
    def nfree(self):
        return self.free.size

    def expand(self, x_free):
        full = self.lift.copy()
        full[self.free] = x_free
        return full

    def restrict(self, full):
        return np.asarray(full)[self.free]

    def local_values(self, full, cells=None):
        full = np.asarray(full)
        if cells is None:
            return full[self.l2g]
        return full[self.l2g[cells]]

    def shape_coeffs(self, full, cells=None):
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        C = self.basis.C[cells]
        return np.einsum("cks,ck->cs", C, self.local_values(full, cells))

    def random_free(self, rng):
        return rng.standard_normal(self.nfree)

    def __repr__(self):
        return f"FeSpace({self.spec.name}, ndof={self.ndof}, free={self.nfree}, bc={self.bc.value}, mode={self.mode})"


def build_space(mesh, spec, bc=BcKind.NONE, mode="coupled"):
    """Global space of ``spec`` on ``mesh`` with boundary condition ``bc``."""
    if isinstance(spec, str):
        spec = el.parse_element(spec)
    return FeSpace(mesh, spec, bc, mode)


def interpolate(space, func):
    """Full global DOF vector of the interpolant of ``func``.

    ``func(x)`` returns value, gradient and Hessian at physical points.
    """
    local = el.apply_functionals(space.spec, space.mesh, func)
    full = np.zeros(space.ndof)
    full[space.l2g.ravel()] = local.ravel()
    return full


def polynomial_function(coeffs, dim):
    """Physical polynomial ``sum c_alpha x^alpha`` as a (value, gradient,
    Hessian) callable; ``coeffs`` maps exponent tuples to numbers."""
    items = [(np.array(e), float(c)) for e, c in coeffs.items()]

    def f(x):
        P = x.shape[0]
        v = np.zeros(P)
        g = np.zeros((P, dim))
        h = np.zeros((P, dim, dim))
        for e, c in items:
            v += c * np.prod(x**e, axis=1)
            for a in range(dim):
                if e[a] == 0:
                    continue
                ea = e.copy()
                ea[a] -= 1
                g[:, a] += c * e[a] * np.prod(x**ea, axis=1)
                for b in range(dim):
                    if ea[b] == 0:
                        continue
                    eb = ea.copy()
                    eb[b] -= 1
                    h[:, a, b] += c * e[a] * ea[b] * np.prod(x**eb, axis=1)
        return v, g, h

    return f


def eval_global(space, full, cells, bary_points):
    """Values, gradients and Hessians of the global function with DOF vector
    ``full`` on ``cells`` at barycentric ``bary_points``."""
    cells = np.atleast_1d(np.asarray(cells))
    full = np.asarray(full)
    if full.size == space.nfree and space.nfree != space.ndof:
        full = space.expand(full)
    a = space.shape_coeffs(full, cells)
    return el.evaluate_shape(space.spec, space.mesh, cells, a, np.asarray(bary_points, dtype=float))


# ---------------------------------------------------------------------------
# facet traces


def facet_traces(space, full, facets, side, rule):
    """Evaluate the function from one side of each facet at the facet rule
    points.  ``side`` is 0 (lower-indexed cell) or 1."""
    mesh = space.mesh
    d = mesh.dim
    facets = np.asarray(facets)
    nf, Q = facets.size, rule.size
    val = np.zeros((nf, Q))
    grad = np.zeros((nf, Q, d))
    hess = np.zeros((nf, Q, d, d))
    cells = mesh.facet_cells[facets, side]
    loc = mesh.facet_local[facets, side]
    for li in range(d + 1):
        sel = np.flatnonzero(loc == li)
        if sel.size == 0:
            continue
        ent = mesh.local_entities[d - 1][li]
        pts = embed_points(rule.points, ent, d + 1)
        v, g, h = eval_global(space, full, cells[sel], pts)
        val[sel], grad[sel], hess[sel] = v, g, h
    return val, grad, hess


def _facet_rule(space, extra=0):
    return rule_simplex(space.mesh.dim - 1, 2 * space.spec.shape_degree + extra)


def check_jump_moments(space, full):
    """Largest normalized moment of the normal-derivative jump against the
    monomials of degree ``spec.jump_degree`` over all interior facets."""
    mesh = space.mesh
    d = mesh.dim
    interior = np.flatnonzero(~mesh.boundary_facet)
    if interior.size == 0:
        return 0.0
    rule = _facet_rule(space)
    n = mesh.facet_normals[interior]
    _, gp, _ = facet_traces(space, full, interior, 0, rule)
    _, gm, _ = facet_traces(space, full, interior, 1, rule)
    dnp = np.einsum("fqa,fa->fq", gp, n)
    dnm = np.einsum("fqa,fa->fq", gm, n)
    jump = dnp - dnm
    w = rule.mean_weights
    E = np.array(homogeneous_exponents(d, space.spec.jump_degree))
    q = np.prod(rule.points[:, None, :] ** E[None], axis=2)  # (Q, M)
    qn = np.sqrt(w @ q**2)
    mom = np.abs(np.einsum("fq,q,qm->fm", jump, w, q))
    scale = np.sqrt(dnp**2 @ w) + np.sqrt(dnm**2 @ w)
    scale = np.where(scale > 0, scale, 1.0)
    return float((mom / (qn[None, :] * scale[:, None])).max())


def check_mt_identity(space, full, quad_degree=None):
    """Broken norms and the facet term of the integration-by-parts identity.

    Returns
    -------
    lap2 : float
        Squared broken L2 norm of the Laplacian.
    hess2 : float
        Squared broken L2 norm of the Hessian.
    face : float
        ``2 * sum_F ([d_n v], sum_i d_ti^2 v)_F`` over all facets, boundary
        facets included (where the jump is the one-sided normal derivative).
    """
    mesh = space.mesh
    d = mesh.dim
    deg = quad_degree or space.spec.default_quad_degree
    rule = rule_simplex(d, deg)
    cells = np.arange(mesh.n_cells)
    _, _, H = eval_global(space, full, cells, rule.points)
    J = mesh.volumes  # |T|; rule weights sum to 1/d!
    from math import factorial

    wq = rule.weights * factorial(d)
    lap = np.trace(H, axis1=2, axis2=3)
    lap2 = float(np.einsum("c,q,cq->", J, wq, lap**2))
    hess2 = float(np.einsum("c,q,cqab->", J, wq, H**2))

    frule = _facet_rule(space)
    fw = frule.mean_weights
    allf = np.arange(mesh.n_entities(d - 1))
    n = mesh.facet_normals
    _, gp, hp = facet_traces(space, full, allf, 0, frule)
    dnp = np.einsum("fqa,fa->fq", gp, n)
    inner = ~mesh.boundary_facet
    jump = dnp.copy()
    if inner.any():
        _, gm, _ = facet_traces(space, full, np.flatnonzero(inner), 1, frule)
        jump[inner] -= np.einsum("fqa,fa->fq", gm, n[inner])
    # sum of tangential second derivatives = Laplacian minus normal-normal part
    tt = np.trace(hp, axis1=2, axis2=3) - np.einsum("fqab,fa,fb->fq", hp, n, n)
    face = 2.0 * float(np.einsum("f,q,fq->", mesh.facet_measure, fw, jump * tt))
    return lap2, hess2, face
