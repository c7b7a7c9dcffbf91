"""Certification checks shared by the ``verify`` command and the tests.

Each check returns a :class:`CheckResult`; ``value`` is the worst observed
quantity and ``passed`` compares it with ``tol`` in the direction given by
``mode``.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from . import problems
from .elements import biorthogonality_residuals, get_element, nodal_basis, smallest_singular_values
from .femspace import BcKind, build_space, check_jump_moments, check_mt_identity
from .mesh import build_structured, perturb, refine_nvb
from .quadrature import check_exactness, rule_simplex

log = logging.getLogger(__name__)

FAMILIES_2D = (("specht2", 2), ("v2d", 3), ("v2d", 4), ("v2d", 6))
FAMILIES_3D = (("v3d", 5),)
FAMILIES = FAMILIES_2D + FAMILIES_3D


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    mode: str = "le"  # "le": value <= tol, "lt": value < tol, "ge": value >= tol
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self):
        if not np.isfinite(self.value):
            return False
        if self.mode == "le":
            return self.value <= self.tol
        if self.mode == "lt":
            return self.value < self.tol
        return self.value >= self.tol

    def line(self):
        op = {"le": "<=", "lt": "<", "ge": ">="}[self.mode]
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} {op} {self.tol:.1e} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# meshes


def random_cells_mesh(dim, seed=0):
    """A strongly perturbed structured mesh with at least 200 cells; its
    cells serve as a sample of random shape-regular simplices."""
    if dim == 2:
        return perturb(build_structured(2, 10), 0.25, seed)
    return perturb(build_structured(3, 4), 0.15, seed)


def identity_mesh(dim, seed=0):
    """Twice newest-vertex-bisected and perturbed mesh of ``[-1, 1]^2``
    (2D) or a perturbed Kuhn mesh of the unit cube (3D)."""
    if dim == 2:
        m = build_structured(2, 2, (-1.0, 1.0))
        m = refine_nvb(m, range(m.n_cells))
        m = refine_nvb(m, range(m.n_cells))
        return perturb(m, 0.15, seed)
    return perturb(build_structured(3, 2), 0.12, seed)


# ---------------------------------------------------------------------------
# checks


def used_quadrature_degree():
    """Largest rule degree requested by assembly, error norms and the
    indicator for any supported element."""
    return max(asm.rhs_degree(get_element(f, ell)) for f, ell in FAMILIES)


@_timed
def check_quadrature(max_degree=None, tol=1e-12):
    """Monomial exactness of the simplex rules in 1, 2 and 3 dimensions for
    every degree up to ``max_degree`` (default: the largest degree in use)."""
    max_degree = used_quadrature_degree() if max_degree is None else max_degree
    worst = 0.0
    for dim in (1, 2, 3):
        for deg in range(max_degree + 1):
            worst = max(worst, check_exactness(rule_simplex(dim, deg), tol=np.inf))
    return CheckResult("quadrature exactness", worst, tol, detail={"max_degree": max_degree})


@_timed
def check_unisolvence(family, ell, seed=0, n_cells=200, bio_tol=1e-8, cond_tol=1e10):
    spec = get_element(family, ell)
    mesh = random_cells_mesh(spec.dim, seed)
    basis = nodal_basis(spec, mesh, cells=np.arange(n_cells), check=False)
    res = biorthogonality_residuals(spec, mesh, basis)
    cond = float(basis.cond.max())
    r = CheckResult(f"unisolvence {spec.name}", float(res.max()), bio_tol, detail={"cond": cond, "cells": n_cells})
    r.detail["cond_ok"] = cond < cond_tol
    if not r.detail["cond_ok"]:
        r.value = np.inf
    return r


@_timed
def check_base_not_unisolvent(seed=0, tol=1e-10):
    """Negative control: the plain DOF set for ``ell = 5`` in 2D."""
    spec = get_element("v2d_base", 5)
    mesh = random_cells_mesh(2, seed)
    s = smallest_singular_values(spec, mesh, np.arange(200))
    return CheckResult("non-unisolvence v2d_base(5)", float(s.max()), tol, mode="lt")


def _random_vectors(space, n, rng):
    for _ in range(n):
        yield space.expand(space.random_free(rng))


@_timed
def check_strong_identity(family, ell, trials=100, seed=0, tol=1e-10):
    """Strong discrete Miranda-Talenti identity ``|Lap|^2 = |D2|^2`` on the
    coupled space with ``H^1_0`` conditions."""
    spec = get_element(family, ell)
    rng = np.random.default_rng(seed)
    space = build_space(identity_mesh(spec.dim, seed), spec, BcKind.DIRICHLET_H10)
    worst = 0.0
    for v in _random_vectors(space, trials, rng):
        lap2, hess2, _ = check_mt_identity(space, v)
        worst = max(worst, abs(lap2 - hess2) / hess2)
    return CheckResult(f"strong identity {spec.name}", worst, tol)


@_timed
def check_relaxed_identity(family, ell, trials=100, seed=0, tol=1e-9):
    """Three-term identity with facet terms on the relaxed space."""
    spec = get_element(family, ell)
    rng = np.random.default_rng(seed)
    space = build_space(identity_mesh(spec.dim, seed), spec, BcKind.DIRICHLET_H10, mode="relaxed")
    worst = face_max = 0.0
    for v in _random_vectors(space, trials, rng):
        lap2, hess2, face = check_mt_identity(space, v)
        worst = max(worst, abs(lap2 - hess2 - face) / hess2)
        face_max = max(face_max, abs(face) / hess2)
    r = CheckResult(f"relaxed identity {spec.name}", worst, tol, detail={"face_term": face_max})
    if not face_max > 1e-8:
        r.value = np.inf
    return r


@_timed
def check_jumps(family, ell, trials=10, seed=0, tol=1e-10):
    """Normal-derivative jump moments on the coupled space."""
    spec = get_element(family, ell)
    rng = np.random.default_rng(seed)
    space = build_space(identity_mesh(spec.dim, seed), spec, BcKind.DIRICHLET_H10)
    worst = 0.0
    for v in _random_vectors(space, trials, rng):
        worst = max(worst, check_jump_moments(space, v))
    return CheckResult(f"jump moments {spec.name}", worst, tol)


def cordes_of(problem, n_samples=4096, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = problem.box
    x = rng.uniform(lo, hi, size=(n_samples, problem.dim))
    return asm.cordes_parameters(problem.coef, problem.dim, x, exact=True)


@_timed
def check_coercivity(problem, element, n=4, trials=100, seed=0):
    """Smallest ratio ``A_h(v, v) / (delta |Lap v|^2)`` over random
    coefficient vectors and the smallest generalized eigenvalue of the
    symmetric part; both must be at least one."""
    import scipy.linalg as sla

    par = cordes_of(problem)
    spec = get_element(*element) if isinstance(element, tuple) else element
    mesh = build_structured(problem.dim, n, problem.box)
    space = build_space(mesh, spec, BcKind.DIRICHLET_H10)
    K = asm.assemble_nondivergence(space, problem).matrix.toarray()
    lap_problem = asm.ProblemSpec(
        "laplace", problem.dim, "nondivergence", problem.box, problem.exact, problem.rhs,
        coef=lambda x: np.broadcast_to(np.eye(problem.dim), (x.shape[0], problem.dim, problem.dim)).copy(),
    )
    L = asm.assemble_nondivergence(space, lap_problem).matrix.toarray()
    L = 0.5 * (L + L.T)
    Ks = 0.5 * (K + K.T)
    rng = np.random.default_rng(seed)
    ratio = np.inf
    for _ in range(trials):
        x = rng.standard_normal(space.nfree)
        ratio = min(ratio, float(x @ K @ x) / (par.delta * float(x @ L @ x)))
    mu = float(sla.eigh(Ks, L, eigvals_only=True)[0]) / par.delta
    return CheckResult(
        f"coercivity {problem.name}", min(ratio, mu), 1.0, mode="ge",
        detail={"sampled": ratio, "eig": mu, "delta": par.delta, "epsilon": par.epsilon},
    )


def run_all(quick=False):
    """Run the certification suite; returns the list of results."""
    trials = 10 if quick else 100
    out = [check_quadrature(16 if quick else None)]
    for fam, ell in FAMILIES:
        out.append(check_unisolvence(fam, ell))
    out.append(check_base_not_unisolvent())
    for fam, ell in FAMILIES:
        out.append(check_strong_identity(fam, ell, trials=trials))
        out.append(check_relaxed_identity(fam, ell, trials=trials))
        out.append(check_jumps(fam, ell))
    for prob, el in ((problems.nondiv_2d_1(), ("v2d", 3)), (problems.nondiv_3d(), ("v3d", 5))):
        out.append(check_coercivity(prob, el, n=2 if prob.dim == 3 else 4, trials=trials))
    return out
