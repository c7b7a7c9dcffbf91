import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtfem.errors import InvalidArgumentError, InvalidMeshError, UnsupportedError
from mtfem.mesh import Mesh, build_structured, entity_geometry, perturb, refine_nvb, refine_uniform


@pytest.mark.parametrize("n", [1, 2, 5])
def test_structured_2d_counts(n):
    m = build_structured(2, n)
    assert m.n_vertices == (n + 1) ** 2
    assert m.n_cells == 2 * n * n
    assert m.n_entities(1) == 3 * n * n + 2 * n
    assert m.n_vertices - m.n_entities(1) + m.n_cells == 1  # Euler
    assert m.check()


@pytest.mark.parametrize("n", [1, 2])
def test_structured_3d_counts(n):
    m = build_structured(3, n, (-1.0, 1.0))
    assert m.n_cells == 6 * n**3
    assert m.n_vertices == (n + 1) ** 3
    assert m.n_vertices - m.n_entities(1) + m.n_entities(2) - m.n_cells == 1
    facets_per_cell = 4 * m.n_cells
    nb = int(m.boundary_facet.sum())
    assert 2 * (m.n_entities(2) - nb) + nb == facets_per_cell
    assert nb == 6 * 2 * n * n
    assert m.check()


def test_local_entity_convention():
    m = build_structured(3, 1)
    for c in range(m.n_cells):
        cell = m.cells[c]
        assert np.all(np.diff(cell) > 0)
        # local facet k is opposite local vertex d - k
        for k in range(4):
            face = m.entities[2][m.cell_entities[2][c, k]]
            assert cell[3 - k] not in face


def test_facet_normals_unit_and_outward_on_boundary():
    m = build_structured(2, 3, (-1.0, 1.0))
    n = m.facet_normals
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    for f in np.flatnonzero(m.boundary_facet):
        c = m.facet_cells[f, 0]
        mid = m.vertices[m.entities[1][f]].mean(axis=0)
        centre = m.vertices[m.cells[c]].mean(axis=0)
        assert np.dot(n[f], mid - centre) > 0


def test_boundary_masks_and_corners():
    m = build_structured(2, 2)
    assert int(m.corner_vertex.sum()) == 4
    assert int(m.boundary_vertex.sum()) == 8
    edge_masks = m.entity_mask[1][m.boundary_facet]
    assert np.all(edge_masks != 0)


def test_edge_frames_orthonormal_3d():
    m = perturb(build_structured(3, 2), 0.1, 0)
    t = m.edge_tangents
    N = m.edge_normals
    assert np.allclose(np.einsum("eia,ea->ei", N, t), 0.0)
    assert np.allclose(np.einsum("eia,eja->eij", N, N), np.eye(2)[None])


def test_entity_geometry_triangle_edge():
    m = build_structured(2, 1)
    g = entity_geometry(m, 1, 0)
    E = m.entities[1][0]
    assert g.measure == pytest.approx(np.linalg.norm(m.vertices[E[1]] - m.vertices[E[0]]))


def test_uniform_refinement_2d_and_3d():
    m = build_structured(2, 2)
    r = refine_uniform(m)
    assert r.n_cells == 4 * m.n_cells
    assert r.check()
    assert r.h == pytest.approx(m.h / 2)
    m3 = build_structured(3, 1)
    r3 = refine_uniform(m3)
    assert r3.n_cells == 48
    with pytest.raises(UnsupportedError):
        refine_uniform(Mesh(m3.vertices, m3.cells, m3.box))


def test_nvb_single_cell_and_closure():
    m = build_structured(2, 1)
    r = refine_nvb(m, [0])
    assert r.check()
    assert r.n_cells == 4  # the refinement edge is shared, so the closure bisects the neighbour
    assert r.volumes.sum() == pytest.approx(1.0)


def test_nvb_full_sweeps_preserve_shape():
    m = build_structured(2, 2, (-1.0, 1.0))
    ratios = [m.shape_regularity()]
    for _ in range(4):
        m = refine_nvb(m, range(m.n_cells))
        assert m.check()
        ratios.append(m.shape_regularity())
    # two sweeps map the initial triangles onto scaled copies
    assert ratios[2] == pytest.approx(ratios[0])
    assert ratios[4] == pytest.approx(ratios[0])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), steps=st.integers(1, 5))
def test_nvb_random_marking_stays_conforming(seed, steps):
    rng = np.random.default_rng(seed)
    m = build_structured(2, 2, (-1.0, 1.0))
    r0 = m.shape_regularity()
    for _ in range(steps):
        marked = np.flatnonzero(rng.random(m.n_cells) < 0.3)
        if marked.size == 0:
            marked = [int(rng.integers(m.n_cells))]
        new = refine_nvb(m, marked)
        assert new.check()
        assert new.n_cells >= m.n_cells + len(set(int(c) for c in marked))
        m = new
    # newest-vertex bisection generates finitely many similarity classes
    assert m.shape_regularity() <= 2.5 * r0


def test_nvb_errors():
    with pytest.raises(InvalidArgumentError):
        refine_nvb(build_structured(2, 1), [5])
    with pytest.raises(UnsupportedError):
        refine_nvb(build_structured(3, 1), [0])
    m = build_structured(2, 1)
    assert refine_nvb(m, []) is m


def test_perturb_moves_interior_only():
    m = build_structured(2, 4)
    p = perturb(m, 0.2, 1)
    assert np.allclose(p.vertices[m.boundary_vertex], m.vertices[m.boundary_vertex])
    assert not np.allclose(p.vertices[~m.boundary_vertex], m.vertices[~m.boundary_vertex])
    assert p.check()
    with pytest.raises(InvalidMeshError):
        perturb(m, 5.0, 1)


def test_invalid_inputs():
    with pytest.raises(InvalidArgumentError):
        build_structured(4, 2)
    with pytest.raises(InvalidArgumentError):
        build_structured(2, 0)
    with pytest.raises(InvalidArgumentError):
        build_structured(2, 2, ((0.0, 0.0), (1.0, 0.0)))
    with pytest.raises(InvalidMeshError):
        Mesh(np.zeros((3, 2)), np.array([[0, 1]]), ((0, 0), (1, 1)))
