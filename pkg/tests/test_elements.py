from math import comb

import numpy as np
import pytest

from mtfem.elements import (
    apply_functionals,
    biorthogonality_residual,
    biorthogonality_residuals,
    expected_ndofs,
    functional_matrix,
    get_element,
    nodal_basis,
    parse_element,
    smallest_singular_values,
    vandermonde,
)
from mtfem.errors import InvalidArgumentError, UnisolvenceError
from mtfem.femspace import build_space, eval_global, interpolate, polynomial_function
from mtfem.mesh import build_structured, perturb
from mtfem.quadrature import rule_simplex

ELEMENTS = [("specht2", 2), ("v2d", 3), ("v2d", 4), ("v2d", 6), ("v3d", 5)]


@pytest.fixture(scope="module")
def mesh2d():
    return perturb(build_structured(2, 3), 0.2, 7)


@pytest.fixture(scope="module")
def mesh3():
    return perturb(build_structured(3, 1), 0.0, 0)


def _mesh_for(spec, mesh2d, mesh3):
    return mesh2d if spec.dim == 2 else mesh3


def test_dof_counts():
    assert get_element("specht2").ndofs == 12
    assert get_element("v3d", 5).ndofs == 68
    assert get_element("v3d", 5).ndofs == comb(8, 3) + 4 * comb(3, 2)
    for fam, ell in ELEMENTS + [("v2d_base", 5), ("v3d", 6)]:
        spec = get_element(fam, ell)
        assert spec.ndofs == expected_ndofs(fam, ell) == len(spec.shape)


def test_dofs_sorted_by_entity():
    spec = get_element("v2d", 4)
    keys = [(d.entity_dim, d.local_entity, d.pos) for d in spec.dofs]
    assert keys == sorted(keys)


@pytest.mark.parametrize("fam,ell", ELEMENTS)
def test_vandermonde_matches_physical_functionals(fam, ell, mesh2d, mesh3):
    spec = get_element(fam, ell)
    mesh = _mesh_for(spec, mesh2d, mesh3)
    cells = np.arange(min(4, mesh.n_cells))
    V = vandermonde(spec, mesh, cells)
    D = functional_matrix(spec, mesh, cells)
    np.testing.assert_allclose(V, D, atol=1e-9 * np.abs(V).max())


@pytest.mark.parametrize("fam,ell", ELEMENTS)
def test_biorthogonality_two_routes(fam, ell, mesh2d, mesh3):
    spec = get_element(fam, ell)
    mesh = _mesh_for(spec, mesh2d, mesh3)
    basis = nodal_basis(spec, mesh, cells=[0, 1])
    r_all = biorthogonality_residuals(spec, mesh, basis)
    r_one = biorthogonality_residual(spec, mesh, basis, 1)
    assert r_all.max() < 1e-9
    assert r_one < 1e-9


@pytest.mark.parametrize("fam,ell", ELEMENTS)
def test_interpolation_reproduces_full_polynomials(fam, ell, mesh2d, mesh3, rng):
    spec = get_element(fam, ell)
    mesh = _mesh_for(spec, mesh2d, mesh3)
    d = spec.dim
    deg = ell if fam != "specht2" else 3
    exps = [e for e in np.ndindex(*(deg + 1,) * d) if sum(e) <= deg]
    coeffs = {tuple(e): rng.standard_normal() for e in exps}
    f = polynomial_function(coeffs, d)
    space = build_space(mesh, spec)
    full = interpolate(space, f)
    rule = rule_simplex(d, 4)
    cells = np.arange(mesh.n_cells)
    v, g, H = eval_global(space, full, cells, rule.points)
    x = np.einsum("pi,cia->cpa", rule.points, mesh.vertices[mesh.cells])
    fv, fg, fH = f(x.reshape(-1, d))
    scale = np.abs(fv).max()
    np.testing.assert_allclose(v.ravel(), fv, atol=1e-9 * scale)
    np.testing.assert_allclose(H.reshape(-1, d, d), fH, atol=1e-7 * np.abs(fH).max())


def test_apply_functionals_of_linear_function(mesh2d):
    spec = get_element("v2d", 4)
    f = polynomial_function({(1, 0): 2.0, (0, 1): -1.0}, 2)
    vals = apply_functionals(spec, mesh2d, f, cells=[0])[0]
    for j, dof in enumerate(spec.dofs):
        if dof.kind == "hess":
            assert abs(vals[j]) < 1e-12
        if dof.kind == "grad":
            h = mesh2d.vertex_h[mesh2d.cell_entities[0][0, dof.local_entity]]
            assert vals[j] == pytest.approx(h * (2.0, -1.0)[dof.comp[0]])


def test_base_dof_set_is_not_unisolvent():
    spec = get_element("v2d_base", 5)
    mesh = perturb(build_structured(2, 2), 0.2, 1)
    assert smallest_singular_values(spec, mesh).max() < 1e-10
    with pytest.raises(UnisolvenceError) as exc:
        nodal_basis(spec, mesh)
    assert exc.value.cell >= 0


def test_condition_grows_with_degenerate_cells():
    from mtfem.mesh import Mesh

    spec = get_element("v2d", 4)
    base = build_structured(2, 2)
    V = base.vertices.copy()
    centre = np.flatnonzero(~base.boundary_vertex)[0]
    good = nodal_basis(spec, base).cond.max()
    V[centre] = [0.5, 0.02]  # nearly flat triangles
    bad = nodal_basis(spec, Mesh(V, base.cells, base.box), check=False).cond.max()
    assert bad > 10 * good


@pytest.mark.parametrize(
    "name,family,ell",
    [("specht2", "specht2", 2), ("v2d3", "v2d", 3), ("V2D(4)", "v2d", 4), ("v3d5", "v3d", 5), ("v2dbase5", "v2d_base", 5)],
)
def test_parse_element(name, family, ell):
    spec = parse_element(name)
    assert (spec.family, spec.ell) == (family, ell)


def test_parse_element_rejects_unknown():
    with pytest.raises(InvalidArgumentError):
        parse_element("argyris")


def test_shape_degrees():
    assert get_element("specht2").shape_degree == 5
    assert get_element("v2d", 4).shape_degree == 6
    assert get_element("v3d", 5).shape_degree == 10
