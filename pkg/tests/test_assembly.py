from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtfem import assembly as asm
from mtfem import problems
from mtfem.elements import get_element
from mtfem.errors import CordesViolation, InvalidArgumentError, SolverError
from mtfem.femspace import BcKind, build_space
from mtfem.mesh import build_structured

BOX2 = [[-1.0, -1.0], [1.0, 1.0]]


def _cubic(rng):
    exps = [(i, j) for i in range(4) for j in range(4 - i)]
    return {e: float(c) for e, c in zip(exps, rng.uniform(-1, 1, len(exps)))}


@pytest.mark.parametrize("element", [("v2d", 3), ("v2d", 4), ("specht2", 2)])
def test_polynomial_reproduction(element, rng):
    # a cubic with inhomogeneous boundary values lies in every 2D space,
    # so Galerkin consistency forces the exact solution
    prob = problems.polynomial_problem(2, _cubic(rng), coef=problems.coef_2d, box=BOX2)
    space = build_space(build_structured(2, 4, (-1.0, 1.0)), get_element(*element), BcKind.DIRICHLET_H10)
    full, system, _ = asm.solve_problem(space, prob)
    e0, e2 = asm.error_norms(space, full, prob.exact)
    assert e0 < 1e-9 and e2 < 1e-9
    _, eta = asm.eta_indicator(space, full, prob)
    assert eta < 1e-8


def test_polynomial_reproduction_3d(rng):
    exps = [(i, j, k) for i in range(3) for j in range(3 - i) for k in range(3 - i - j)]
    coeffs = {e: float(c) for e, c in zip(exps, rng.uniform(-1, 1, len(exps)))}
    prob = problems.polynomial_problem(3, coeffs, coef=problems.coef_3d, box=[[-1.0] * 3, [1.0] * 3])
    space = build_space(build_structured(3, 2, (-1.0, 1.0)), get_element("v3d", 5), BcKind.DIRICHLET_H10)
    full, _, _ = asm.solve_problem(space, prob)
    e0, e2 = asm.error_norms(space, full, prob.exact)
    assert e0 < 1e-8 and e2 < 1e-8


def test_biharmonic_matrix_spd():
    prob = problems.biharmonic(2)
    space = build_space(build_structured(2, 3, prob.box), get_element("v2d", 3), BcKind.CLAMPED_H20)
    system = asm.assemble(space, prob)
    K = system.matrix.toarray()
    assert system.symmetric
    assert np.allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    assert np.linalg.eigvalsh(K).min() > 0


def test_nondivergence_system_unsymmetric_flag():
    prob = problems.nondiv_2d_1()
    space = build_space(build_structured(2, 2, prob.box), get_element("v2d", 3), BcKind.DIRICHLET_H10)
    assert not asm.assemble(space, prob).symmetric


def test_direct_and_iterative_agree():
    prob = problems.nondiv_2d_1()
    space = build_space(build_structured(2, 4, prob.box), get_element("v2d", 3), BcKind.DIRICHLET_H10)
    system = asm.assemble(space, prob)
    xd = asm.solve(system, "direct")
    xi = asm.solve(system, "iterative")
    assert np.linalg.norm(xd - xi) <= 1e-7 * np.linalg.norm(xd)
    assert asm.residual_norm(system, xd) < 1e-10


def test_singular_matrix_raises():
    import scipy.sparse as sps

    A = sps.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        asm.solve(asm.SparseSystem(A, np.ones(2), True), "direct")


def test_unknown_solver():
    import scipy.sparse as sps

    with pytest.raises(InvalidArgumentError):
        asm.solve(asm.SparseSystem(sps.identity(2, format="csr"), np.ones(2), True), "cholesky")


def test_problem_kind_mismatch():
    space = build_space(build_structured(2, 2), get_element("v2d", 3), BcKind.CLAMPED_H20)
    with pytest.raises(InvalidArgumentError):
        asm.assemble_nondivergence(space, problems.biharmonic(2))
    with pytest.raises(InvalidArgumentError):
        asm.eta_indicator(space, np.zeros(space.ndof), problems.biharmonic(2))


def test_zero_exact_solution_rejected():
    space = build_space(build_structured(2, 2), get_element("v2d", 3), BcKind.DIRICHLET_H10)

    def zero(x):
        P = x.shape[0]
        return np.zeros(P), np.zeros((P, 2)), np.zeros((P, 2, 2))

    with pytest.raises(InvalidArgumentError):
        asm.error_norms(space, np.zeros(space.ndof), zero)


def test_cordes_exact_2d():
    # A = [[2, s], [s, 2]] with s = +-1: tr = 4, |A|^2 = 10
    par = asm.cordes_parameters(problems.coef_2d, 2, np.array([[0.5, 0.5], [-0.5, 0.5]]), exact=True)
    assert par.epsilon == Fraction(3, 5)
    assert par.gamma_min == par.gamma_max == Fraction(2, 5)
    assert par.delta == pytest.approx(1 - np.sqrt(2 / 5))


def test_cordes_exact_3d():
    # tr = 9, |A|^2 = 27 + 6 = 33
    x = np.array([[0.5, 0.5, 0.5], [-0.5, 0.5, -0.5], [0.3, -0.2, 0.1]])
    par = asm.cordes_parameters(problems.coef_3d, 3, x, exact=True)
    assert par.epsilon == Fraction(5, 11)
    assert par.gamma_min == par.gamma_max == Fraction(3, 11)


def test_cordes_violation():
    def strong(x):
        return np.broadcast_to(np.diag([1.0, 1.0, 100.0]), (x.shape[0], 3, 3)).copy()

    with pytest.raises(CordesViolation):
        asm.cordes_parameters(strong, 3, np.zeros((1, 3)))
    with pytest.warns(UserWarning):
        par = asm.cordes_parameters(strong, 3, np.zeros((1, 3)), strict=False)
    assert np.isnan(par.delta)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(0.1, 5.0))
def test_cordes_float_matches_exact(s, scale):
    def A(x):
        return np.broadcast_to(scale * np.array([[1.0, s], [s, 1.0]]), (x.shape[0], 2, 2)).copy()

    f = asm.cordes_parameters(A, 2, np.zeros((1, 2)))
    e = asm.cordes_parameters(A, 2, np.zeros((1, 2)), exact=True)
    assert f.epsilon == pytest.approx(float(e.epsilon), rel=1e-12)
    # 2D: eps = 2 / (1 + s^2) - 1, capped at 1
    assert f.epsilon == pytest.approx(min(2 / (1 + s * s) - 1, 1.0), rel=1e-12, abs=1e-15)


def test_nonsymmetric_coefficient_rejected():
    def A(x):
        return np.broadcast_to(np.array([[1.0, 0.5], [0.0, 1.0]]), (x.shape[0], 2, 2)).copy()

    with pytest.raises(InvalidArgumentError):
        asm.cordes_parameters(A, 2, np.zeros((1, 2)))


def test_errors_decrease_under_refinement():
    prob = problems.nondiv_2d_1()
    errs = []
    for n in (4, 8):
        space = build_space(build_structured(2, n, prob.box), get_element("v2d", 3), BcKind.DIRICHLET_H10)
        full, _, _ = asm.solve_problem(space, prob)
        errs.append(asm.error_norms(space, full, prob.exact))
    assert errs[1][0] < errs[0][0] and errs[1][1] < errs[0][1]


def test_quadrature_degree_too_low():
    space = build_space(build_structured(2, 2), get_element("v2d", 3), BcKind.DIRICHLET_H10)
    with pytest.raises(InvalidArgumentError):
        asm.assemble(space, problems.nondiv_2d_1(), quad_degree=1)
