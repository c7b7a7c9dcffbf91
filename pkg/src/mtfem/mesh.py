"""Simplicial meshes of axis-aligned boxes.

Cells are stored with their vertex indices sorted ascending, which fixes a
canonical local numbering: the local sub-entities of a cell are the
``itertools.combinations`` of its sorted vertices, so a shared edge or face is
seen with the same vertex order from every incident cell.  For 2D meshes the
newest-vertex-bisection state is kept separately in :attr:`Mesh.nvb` as
ordered triples ``(a, b, c)`` with refinement edge ``(a, b)``.
"""

from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, InvalidMeshError, UnsupportedError


@dataclass(frozen=True)
class FacePatch:
    """The one or two cells around a (d-1)-face, with its fixed unit normal.

    The normal is outward for a boundary face and points out of the
    lower-indexed cell for an interior face.
    """

    face: int
    cells: tuple
    normal: np.ndarray


@dataclass(frozen=True)
class EntityGeometry:
    measure: float
    normals: np.ndarray
    tangents: np.ndarray
    bary_gradients: np.ndarray


def _barycentric_gradients(coords):
    """``coords`` (nc, d+1, d) -> gradients (nc, d+1, d) and det J."""
    J = np.swapaxes(coords[:, 1:] - coords[:, :1], 1, 2)
    det = np.linalg.det(J)
    if np.any(np.abs(det) <= 1e-14 * np.max(np.abs(J), axis=(1, 2)) ** J.shape[1]):
        raise InvalidMeshError("degenerate simplex in mesh")
    B = np.linalg.inv(J)
    G = np.concatenate([-B.sum(axis=1, keepdims=True), B], axis=1)
    return G, det, B


def _radius_ratio(coords):
    """Circumradius over inradius for each simplex in ``coords``."""
    d = coords.shape[2]
    nc = coords.shape[0]
    vol = np.abs(np.linalg.det(np.swapaxes(coords[:, 1:] - coords[:, :1], 1, 2)))
    from math import factorial

    vol = vol / factorial(d)
    # facet measures
    area = np.zeros(nc)
    for f in combinations(range(d + 1), d):
        P = coords[:, list(f)]
        E = P[:, 1:] - P[:, :1]
        gram = np.einsum("cia,cja->cij", E, E)
        area += np.sqrt(np.abs(np.linalg.det(gram))) / factorial(d - 1)
    inr = d * vol / area
    # circumcentre: 2 (x_i - x_0) . c = |x_i|^2 - |x_0|^2
    A = 2.0 * (coords[:, 1:] - coords[:, :1])
    rhs = np.sum(coords[:, 1:] ** 2, axis=2) - np.sum(coords[:, :1] ** 2, axis=2)
    cc = np.linalg.solve(A, rhs[..., None])[..., 0]
    circ = np.linalg.norm(coords[:, 0] - cc, axis=1)
    return circ / inr


class Mesh:
    """Conforming simplicial mesh with entity tables.

    Parameters
    ----------
    vertices : (nv, d) array
    cells : (nc, d+1) integer array
        Any vertex order; cells are stored sorted.
    box : (2, d) array
        Lower and upper corners of the axis-aligned domain.
    structured_n : int, optional
        Subdivisions per axis when the mesh comes from
        :func:`build_structured` (enables 3D uniform refinement).
    nvb : (nc, 3) array, optional
        Newest-vertex-bisection triples for 2D meshes.  Defaults to the
        longest-edge assignment.
    """

    def __init__(self, vertices, cells, box, structured_n=None, nvb=None):
        vertices = np.asarray(vertices, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        self.dim = d = vertices.shape[1]
        if d not in (2, 3) or cells.ndim != 2 or cells.shape[1] != d + 1:
            raise InvalidMeshError("cells must be (nc, dim+1) with dim 2 or 3")
        self.vertices = vertices
        self.box = np.asarray(box, dtype=float)
        self.structured_n = structured_n
        self.cells = np.sort(cells, axis=1)
        self._build_entities()
        coords = self.vertices[self.cells]
        self.bary_grads, det, self.jac_inv = _barycentric_gradients(coords)
        from math import factorial

        self.volumes = np.abs(det) / factorial(d)
        diffs = coords[:, :, None, :] - coords[:, None, :, :]
        self.cell_diam = np.sqrt((diffs**2).sum(axis=3)).max(axis=(1, 2))
        self.radius_ratio = _radius_ratio(coords)
        self._build_facets()
        self._build_boundary()
        self._build_frames()
        if d == 2:
            self.nvb = self._default_nvb() if nvb is None else np.asarray(nvb, dtype=np.int64)
        else:
            self.nvb = None
        self.vertex_h = self._vertex_h()

    # -- construction helpers -------------------------------------------------
    def _build_entities(self):
        d = self.dim
        nc = self.cells.shape[0]
        self.local_entities = {k: list(combinations(range(d + 1), k + 1)) for k in range(d + 1)}
        self.entities = {0: np.arange(self.vertices.shape[0])[:, None]}
        self.cell_entities = {0: self.cells}
        for k in range(1, d):
            L = np.array(self.local_entities[k])
            allt = self.cells[:, L].reshape(-1, k + 1)
            ent, inv = np.unique(allt, axis=0, return_inverse=True)
            self.entities[k] = ent
            self.cell_entities[k] = inv.reshape(nc, len(L))
        self.entities[d] = self.cells
        self.cell_entities[d] = np.arange(nc)[:, None]
        used = np.zeros(self.vertices.shape[0], dtype=bool)
        used[self.cells.ravel()] = True
        if not used.all():
            raise InvalidMeshError("mesh has unreferenced vertices")

    def n_entities(self, k):
        return self.entities[k].shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def edges(self):
        return self.entities[1]

    @property
    def faces(self):
        return self.entities[2] if self.dim == 3 else None

    def _build_facets(self):
        d = self.dim
        nf = self.n_entities(d - 1)
        ce = self.cell_entities[d - 1]
        flat = ce.ravel()
        owner = np.repeat(np.arange(self.n_cells), d + 1)
        local = np.tile(np.arange(d + 1), self.n_cells)
        counts = np.bincount(flat, minlength=nf)
        if counts.max() > 2:
            raise InvalidMeshError("non-manifold facet shared by more than two cells")
        order = np.argsort(flat, kind="stable")
        fc = -np.ones((nf, 2), dtype=np.int64)
        fl = -np.ones((nf, 2), dtype=np.int64)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        fc[:, 0] = owner[order[start]]
        fl[:, 0] = local[order[start]]
        two = counts == 2
        fc[two, 1] = owner[order[start[two] + 1]]
        fl[two, 1] = local[order[start[two] + 1]]
        self.facet_cells = fc
        self.facet_local = fl
        # local facet index k (combinations order) is opposite local vertex d - k
        opp = d - fl[:, 0]
        g = self.bary_grads[fc[:, 0], opp]
        self.facet_normals = -g / np.linalg.norm(g, axis=1, keepdims=True)
        P = self.vertices[self.entities[d - 1]]
        E = P[:, 1:] - P[:, :1]
        gram = np.einsum("fia,fja->fij", E, E)
        from math import factorial

        self.facet_measure = np.sqrt(np.abs(np.linalg.det(gram))) / factorial(d - 1)

    def _build_boundary(self):
        d = self.dim
        lo, hi = self.box
        scale = np.max(hi - lo)
        mask = np.zeros(self.n_vertices, dtype=np.int64)
        for a in range(d):
            mask |= np.where(np.abs(self.vertices[:, a] - lo[a]) <= 1e-12 * scale, 1 << (2 * a), 0)
            mask |= np.where(np.abs(self.vertices[:, a] - hi[a]) <= 1e-12 * scale, 1 << (2 * a + 1), 0)
        self.vertex_mask = mask
        self.entity_mask = {0: mask}
        for k in range(1, d + 1):
            ent = self.entities[k]
            m = mask[ent[:, 0]].copy()
            for j in range(1, ent.shape[1]):
                m &= mask[ent[:, j]]
            self.entity_mask[k] = m
        bfac = self.facet_cells[:, 1] < 0
        if not np.array_equal(bfac, self.entity_mask[d - 1] != 0):
            raise InvalidMeshError("boundary facets do not match the box boundary")
        self.boundary_facet = bfac
        self.boundary_vertex = mask != 0
        pop = np.array([bin(int(m)).count("1") for m in mask])
        self.corner_vertex = pop >= 2

    def _build_frames(self):
        d = self.dim
        V = self.vertices
        E = self.entities[1]
        t = V[E[:, 1]] - V[E[:, 0]]
        self.edge_length = np.linalg.norm(t, axis=1)
        t = t / self.edge_length[:, None]
        self.edge_tangents = t
        if d == 3:
            axis = np.argmin(np.abs(t), axis=1)
            e = np.eye(3)[axis]
            n1 = e - np.sum(e * t, axis=1)[:, None] * t
            n1 /= np.linalg.norm(n1, axis=1, keepdims=True)
            n2 = np.cross(t, n1)
            self.edge_normals = np.stack([n1, n2], axis=1)
        else:
            n = self.facet_normals
            self.edge_normals = n[:, None, :]

    def _vertex_h(self):
        s = np.zeros(self.n_vertices)
        c = np.zeros(self.n_vertices)
        np.add.at(s, self.cells.ravel(), np.repeat(self.cell_diam, self.dim + 1))
        np.add.at(c, self.cells.ravel(), 1.0)
        return s / c

    def _default_nvb(self):
        """Longest edge as refinement edge; ties go to the lowest opposite
        vertex index."""
        out = np.empty_like(self.cells)
        V = self.vertices
        for c, tri in enumerate(self.cells):
            best = None
            for o in range(3):
                a, b = [tri[j] for j in range(3) if j != o]
                L = np.sum((V[a] - V[b]) ** 2)
                key = (-round(L, 12), tri[o])
                if best is None or key < best[0]:
                    best = (key, (a, b, tri[o]))
            out[c] = best[1]
        return out

    # -- queries ----------------------------------------------------------------
    @property
    def h(self):
        return float(self.cell_diam.max())

    def entity_diam(self, k):
        if k == 0:
            return self.vertex_h
        if k == self.dim:
            return self.cell_diam
        P = self.vertices[self.entities[k]]
        diffs = P[:, :, None, :] - P[:, None, :, :]
        return np.sqrt((diffs**2).sum(axis=3)).max(axis=(1, 2))

    def face_patch(self, f):
        cells = tuple(int(c) for c in self.facet_cells[f] if c >= 0)
        return FacePatch(int(f), cells, self.facet_normals[f].copy())

    def shape_regularity(self):
        return float(self.radius_ratio.max())

    def check(self):
        """Re-verify the conformity invariants; raises on failure."""
        d = self.dim
        counts = (self.facet_cells >= 0).sum(axis=1)
        if not np.all((counts == 2) | ((counts == 1) & self.boundary_facet)):
            raise InvalidMeshError("interior facet without two cells")
        vol = np.prod(self.box[1] - self.box[0])
        if abs(self.volumes.sum() - vol) > 1e-12 * vol:
            raise InvalidMeshError("cell volumes do not sum to the box volume")
        if np.any(self.volumes <= 0):
            raise InvalidMeshError("non-positive cell volume")
        return True

    def __repr__(self):
        return f"Mesh(dim={self.dim}, cells={self.n_cells}, vertices={self.n_vertices}, h={self.h:.4g})"


def entity_geometry(mesh, k, index):
    """Measure, normals, tangents and the barycentric gradients of an entity.

    For ``k == dim`` the cell's constant barycentric gradients are returned;
    for lower-dimensional entities the gradients are those of the first
    incident cell found, restricted to nothing (empty array).
    Tangents run from lower to higher global vertex index.
    """
    d = mesh.dim
    if not 0 <= index < mesh.n_entities(k):
        raise InvalidArgumentError(f"no entity {index} of dimension {k}")
    if k == d:
        return EntityGeometry(
            float(mesh.volumes[index]), np.zeros((0, d)), np.zeros((0, d)), mesh.bary_grads[index].copy()
        )
    if k == 0:
        return EntityGeometry(0.0, np.zeros((0, d)), np.zeros((0, d)), np.zeros((0, d)))
    P = mesh.vertices[mesh.entities[k][index]]
    E = P[1:] - P[:1]
    from math import factorial

    measure = float(np.sqrt(abs(np.linalg.det(E @ E.T))) / factorial(k))
    if k == 1:
        t = mesh.edge_tangents[index][None, :]
        normals = mesh.edge_normals[index]
    else:  # 3D face
        normals = mesh.facet_normals[index][None, :]
        q, _ = np.linalg.qr(E.T)
        t = q.T
    if np.any(~np.isfinite(normals)) or measure <= 0:
        raise InvalidMeshError("degenerate entity")
    return EntityGeometry(measure, normals.copy(), t.copy(), np.zeros((0, d)))


# ---------------------------------------------------------------------------
# generators and refinement


def _check_box(dim, box):
    box = np.asarray(box, dtype=float)
    if box.shape == (2,):
        box = np.tile(box[:, None], (1, dim))
    if box.shape != (2, dim):
        raise InvalidArgumentError(f"box must have shape (2, {dim})")
    if np.any(box[1] <= box[0]):
        raise InvalidArgumentError("degenerate box: need lo < hi in every axis")
    return box


def build_structured(dim, n, box=(0.0, 1.0)):
    """Structured mesh of ``box`` with ``n`` subdivisions per axis.

    2D squares are cut along the diagonal from (i, j) to (i+1, j+1); 3D cubes
    are split into the six Kuhn tetrahedra sharing the main diagonal.
    """
    if dim not in (2, 3):
        raise InvalidArgumentError("dim must be 2 or 3")
    if int(n) != n or n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    n = int(n)
    box = _check_box(dim, box)
    ticks = [np.linspace(box[0, a], box[1, a], n + 1) for a in range(dim)]
    # snap exact zeros so axis lines are mesh lines
    for t in ticks:
        t[np.abs(t) < 1e-14 * np.max(np.abs(t))] = 0.0
    grid = np.meshgrid(*ticks, indexing="ij")
    verts = np.column_stack([g.ravel(order="F") for g in grid])
    m = n + 1

    def vid(*idx):
        out = 0
        for a in reversed(range(dim)):
            out = out * m + idx[a]
        return out

    cells = []
    if dim == 2:
        for j in range(n):
            for i in range(n):
                v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
    else:
        perms = list(permutations(range(3)))
        for k in range(n):
            for j in range(n):
                for i in range(n):
                    for p in perms:
                        cur = [i, j, k]
                        tet = [vid(*cur)]
                        for a in p:
                            cur[a] += 1
                            tet.append(vid(*cur))
                        cells.append(tuple(tet))
    return Mesh(verts, np.array(cells), box, structured_n=n)


def _midpoint_table(mesh, edge_ids):
    newv = mesh.vertices[mesh.edges[edge_ids]].mean(axis=1)
    table = -np.ones(mesh.n_entities(1), dtype=np.int64)
    table[edge_ids] = mesh.n_vertices + np.arange(len(edge_ids))
    return np.vstack([mesh.vertices, newv]), table


def refine_uniform(mesh):
    """Halve the mesh size: red refinement in 2D, regeneration at ``2n`` for
    structured 3D meshes."""
    if mesh.dim == 3:
        if mesh.structured_n is None:
            raise UnsupportedError("3D uniform refinement needs a structured mesh")
        return build_structured(3, 2 * mesh.structured_n, mesh.box)
    verts, mid = _midpoint_table(mesh, np.arange(mesh.n_entities(1)))
    ce = mid[mesh.cell_entities[1]]  # local edges (0,1), (0,2), (1,2)
    c = mesh.cells
    m01, m02, m12 = ce[:, 0], ce[:, 1], ce[:, 2]
    kids = np.stack(
        [
            np.column_stack([c[:, 0], m01, m02]),
            np.column_stack([m01, c[:, 1], m12]),
            np.column_stack([m02, m12, c[:, 2]]),
            np.column_stack([m01, m12, m02]),
        ],
        axis=1,
    ).reshape(-1, 3)
    n = 2 * mesh.structured_n if mesh.structured_n else None
    return Mesh(verts, kids, mesh.box, structured_n=n)


def _edge_lookup(mesh):
    E = mesh.edges
    nv = mesh.n_vertices
    keys = E[:, 0] * nv + E[:, 1]
    order = np.argsort(keys)
    return keys[order], order, nv


def _find_edges(lookup, a, b):
    keys, order, nv = lookup
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    pos = np.searchsorted(keys, lo * nv + hi)
    return order[pos]


def refine_nvb(mesh, marked):
    """Newest-vertex bisection of the marked cells plus conforming closure.

    Every marked cell has its refinement edge bisected; the closure then
    bisects the refinement edge of any cell one of whose edges is split, so
    each cell is cut into two, three or four children.
    """
    if mesh.dim != 2:
        raise UnsupportedError("newest-vertex bisection is only implemented in 2D")
    marked = np.asarray(sorted(set(int(c) for c in marked)), dtype=np.int64)
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_cells):
        raise InvalidArgumentError("marked cell id out of range")
    if marked.size == 0:
        return mesh
    nvb = mesh.nvb
    lookup = _edge_lookup(mesh)
    cell_edges = np.column_stack(
        [
            _find_edges(lookup, nvb[:, 0], nvb[:, 1]),
            _find_edges(lookup, nvb[:, 1], nvb[:, 2]),
            _find_edges(lookup, nvb[:, 2], nvb[:, 0]),
        ]
    )
    ref_local = np.zeros(mesh.n_cells, dtype=np.int64)
    flag = np.zeros(mesh.n_entities(1), dtype=np.bool_)
    flag[cell_edges[marked, 0]] = True
    kernels.nvb_closure(cell_edges, ref_local, flag)
    verts, mid = _midpoint_table(mesh, np.flatnonzero(flag))

    out = []
    for c in range(mesh.n_cells):
        a, b, v = nvb[c]
        e_ab, e_bc, e_ca = cell_edges[c]
        if not flag[e_ab]:
            out.append((a, b, v))
            continue
        m = mid[e_ab]
        # children [c, a, m] and [b, c, m]; their refinement edges (c,a), (b,c)
        if flag[e_ca]:
            m2 = mid[e_ca]
            out.append((m, v, m2))
            out.append((a, m, m2))
        else:
            out.append((v, a, m))
        if flag[e_bc]:
            m3 = mid[e_bc]
            out.append((m, b, m3))
            out.append((v, m, m3))
        else:
            out.append((b, v, m))
    out = np.array(out, dtype=np.int64)
    return Mesh(verts, out, mesh.box, structured_n=None, nvb=out)


def perturb(mesh, amplitude=0.1, seed=0):
    """Randomly move interior vertices by up to ``amplitude`` times the local
    mesh size; boundary vertices stay fixed.  The NVB state is kept."""
    rng = np.random.default_rng(seed)
    V = mesh.vertices.copy()
    inner = ~mesh.boundary_vertex
    shift = rng.uniform(-1.0, 1.0, size=V.shape) * amplitude * mesh.vertex_h[:, None]
    V[inner] += shift[inner]
    out = Mesh(V, mesh.cells, mesh.box, structured_n=None, nvb=mesh.nvb)
    sign_old = np.sign(np.linalg.det(np.swapaxes(mesh.vertices[mesh.cells][:, 1:] - mesh.vertices[mesh.cells][:, :1], 1, 2)))
    sign_new = np.sign(np.linalg.det(np.swapaxes(V[mesh.cells][:, 1:] - V[mesh.cells][:, :1], 1, 2)))
    if np.any(sign_old != sign_new):
        raise InvalidMeshError("perturbation inverted a cell; use a smaller amplitude")
    return out
