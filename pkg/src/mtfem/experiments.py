"""Experiment registry, convergence and adaptive drivers, rate tables."""

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import assembly as asm
from . import problems
from .elements import parse_element
from .errors import InvalidArgumentError, SolverError
from .femspace import BcKind, build_space
from .mesh import build_structured, refine_nvb, refine_uniform

log = logging.getLogger(__name__)

COLUMNS = ("level", "h_or_dof", "ndof", "eL2", "rateL2", "eH2", "rateH2", "eta", "seconds")


@dataclass
class Experiment:
    """A registered model problem with its discretization settings.

    ``h_values`` maps element names to the mesh sizes of the reference
    tables; ``cells_per_unit_h`` converts a mesh size into subdivisions per
    axis, ``n = round(cells_per_unit_h / h)``.  ``reference`` holds tabulated
    ``(h, eL2, eH2)`` rows per element.
    """

    name: str
    factory: object
    dim: int
    bc: BcKind
    elements: tuple
    h_values: dict
    cells_per_unit_h: float
    reference: dict = field(default_factory=dict)
    adaptive: bool = False

    def problem(self, **kw):
        return self.factory(**kw)

    def n_for_h(self, h):
        n = self.cells_per_unit_h / h
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise InvalidArgumentError(f"h = {h} gives a non-integer subdivision count {n}")
        return int(round(n))


_H2D = [Fraction(1, 16), Fraction(1, 32), Fraction(1, 64), Fraction(1, 128)]
_H2D4 = [Fraction(1, 8), Fraction(1, 16), Fraction(1, 32), Fraction(1, 64)]
_H3D = [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16)]

REGISTRY = {
    "nondiv-2d-1": Experiment(
        "nondiv-2d-1",
        problems.nondiv_2d_1,
        2,
        BcKind.DIRICHLET_H10,
        ("specht2", "v2d3", "v2d4"),
        {"specht2": _H2D, "v2d3": _H2D, "v2d4": _H2D4},
        1.0,
        {
            "specht2": [(1 / 16, 3.85e-03, 2.73e-02), (1 / 32, 4.13e-04, 7.60e-03), (1 / 64, 4.16e-05, 2.00e-03), (1 / 128, 4.04e-06, 5.17e-04)],
            "v2d3": [(1 / 16, 3.72e-03, 2.93e-02), (1 / 32, 4.01e-04, 8.13e-03), (1 / 64, 4.03e-05, 2.16e-03), (1 / 128, 2.27e-06, 5.54e-04)],
            "v2d4": [(1 / 8, 5.17e-04, 6.12e-03), (1 / 16, 2.73e-05, 8.20e-04), (1 / 32, 1.33e-06, 1.06e-04), (1 / 64, 4.69e-08, 1.35e-05)],
        },
    ),
    "nondiv-2d-singular": Experiment(
        "nondiv-2d-singular",
        problems.nondiv_2d_singular,
        2,
        BcKind.DIRICHLET_H10,
        ("v2d3",),
        {"v2d3": [Fraction(1, 4), Fraction(1, 8), Fraction(1, 16), Fraction(1, 32)]},
        1.0,
        adaptive=True,
    ),
    "biharmonic-2d": Experiment(
        "biharmonic-2d",
        lambda: problems.biharmonic(2),
        2,
        BcKind.CLAMPED_H20,
        ("specht2", "v2d3", "v2d4"),
        {"specht2": _H2D, "v2d3": _H2D, "v2d4": _H2D4},
        0.5,
        {
            "specht2": [(1 / 16, 6.53e-03, 7.78e-02), (1 / 32, 6.61e-04, 2.52e-02), (1 / 64, 5.04e-05, 6.71e-03), (1 / 128, 3.35e-06, 1.72e-03)],
            "v2d3": [(1 / 16, 6.40e-03, 5.21e-02), (1 / 32, 6.27e-04, 1.63e-02), (1 / 64, 4.72e-05, 4.41e-03), (1 / 128, 3.14e-06, 1.13e-03)],
            "v2d4": [(1 / 8, 4.26e-03, 5.99e-02), (1 / 16, 1.09e-04, 9.06e-03), (1 / 32, 2.35e-06, 1.20e-03), (1 / 64, 5.79e-08, 1.53e-04)],
        },
    ),
    "nondiv-3d": Experiment(
        "nondiv-3d",
        problems.nondiv_3d,
        3,
        BcKind.DIRICHLET_H10,
        ("v3d5",),
        {"v3d5": _H3D},
        1.0,
        {"v3d5": [(1 / 2, 4.96e-01, 5.41e-01), (1 / 4, 1.51e-02, 8.68e-02), (1 / 8, 2.81e-04, 8.97e-03), (1 / 16, 2.54e-06, 5.20e-04)]},
    ),
    "biharmonic-3d": Experiment(
        "biharmonic-3d",
        lambda: problems.biharmonic(3),
        3,
        BcKind.CLAMPED_H20,
        ("v3d5",),
        {"v3d5": _H3D},
        1.0,
        {"v3d5": [(1 / 2, 6.14e-02, 1.71e-01), (1 / 4, 4.79e-03, 4.07e-02), (1 / 8, 5.69e-05, 3.35e-03), (1 / 16, 4.59e-07, 1.78e-04)]},
    ),
}


def get_experiment(name):
    try:
        return REGISTRY[name]
    except KeyError as exc:
        raise InvalidArgumentError(f"unknown experiment {name!r}; choose from {sorted(REGISTRY)}") from exc


# ---------------------------------------------------------------------------
# records


@dataclass
class ConvergenceRecord:
    """Per-level results of a convergence or adaptive run."""

    experiment: str
    element: str
    adaptive: bool = False
    rows: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(
            {
                "level": row.get("level", len(self.rows)),
                "h_or_dof": row["h_or_dof"],
                "ndof": row["ndof"],
                "eL2": row.get("eL2", math.nan),
                "rateL2": math.nan,
                "eH2": row.get("eH2", math.nan),
                "rateH2": math.nan,
                "eta": row.get("eta", math.nan),
                "seconds": row.get("seconds", math.nan),
            }
        )

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path, timings=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows:
                out = []
                for c in COLUMNS:
                    v = r[c]
                    if c in ("level", "ndof"):
                        out.append(str(int(v)))
                    elif c == "seconds" and not timings:
                        out.append("")
                    else:
                        out.append(_fmt(v))
                w.writerow(out)
        return path


def _fmt(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.5e}"


def compute_rates(record):
    """Fill the rate columns.

    Uniform runs use ``log2(e_{k-1} / e_k)``; adaptive runs the slope of
    ``log e`` against ``log ndof`` between consecutive levels.  A zero or
    missing error leaves the rate undefined (``nan``).
    """
    rows = record.rows
    for k in range(1, len(rows)):
        for e, r in (("eL2", "rateL2"), ("eH2", "rateH2")):
            a, b = rows[k - 1][e], rows[k][e]
            if not (a > 0 and b > 0):
                rows[k][r] = math.nan
                continue
            if record.adaptive:
                dn = math.log(rows[k]["ndof"] / rows[k - 1]["ndof"])
                rows[k][r] = math.log(b / a) / dn if dn != 0 else math.nan
            else:
                ratio = rows[k - 1]["h_or_dof"] / rows[k]["h_or_dof"]
                rows[k][r] = math.log(a / b) / math.log(ratio)
    return record


def compute_rate_pair(e_coarse, e_fine):
    """Rate of a single refinement step with mesh size halved."""
    if not (e_coarse > 0 and e_fine > 0):
        return math.nan
    return math.log2(e_coarse / e_fine)


# ---------------------------------------------------------------------------
# drivers


def _solve_level(space, problem, solver, quad_degree):
    full, system, _ = asm.solve_problem(space, problem, solver, quad_degree)
    return full


def run_convergence(experiment, element=None, levels=None, solver="direct", quad_degree=None, h0=None, problem_kw=None):
    """Uniform-refinement study.

    Parameters
    ----------
    experiment : Experiment or str
    element : str, optional
        Defaults to the experiment's first element.
    levels : int, optional
        Number of meshes, starting from ``h0`` (default: the first tabulated
        size) and halving ``h`` each time.
    """
    exp = get_experiment(experiment) if isinstance(experiment, str) else experiment
    element = element or exp.elements[0]
    spec = parse_element(element)
    if spec.dim != exp.dim:
        raise InvalidArgumentError(f"element {element} does not match the {exp.dim}D experiment")
    hs = exp.h_values.get(element.replace("(", "").replace(")", ""), next(iter(exp.h_values.values())))
    h = Fraction(h0) if h0 is not None else hs[0]
    levels = levels if levels is not None else len(hs) - 1
    if levels < 2:
        raise InvalidArgumentError("a convergence study needs at least two levels")
    problem = exp.problem(**(problem_kw or {}))
    rec = ConvergenceRecord(exp.name, spec.name)
    mesh = build_structured(exp.dim, exp.n_for_h(h), problem.box)
    for k in range(levels):
        t0 = time.perf_counter()
        space = build_space(mesh, spec, exp.bc)
        try:
            full = _solve_level(space, problem, solver, quad_degree)
        except SolverError as exc:
            log.error("level %d failed: %s", k, exc)
            rec.failed.append(k)
            rec.add(level=k, h_or_dof=float(h), ndof=space.ndof, seconds=time.perf_counter() - t0)
            break
        e0, e2 = asm.error_norms(space, full, problem.exact)
        eta = math.nan
        if problem.kind == "nondivergence":
            _, eta = asm.eta_indicator(space, full, problem)
        rec.add(level=k, h_or_dof=float(h), ndof=space.ndof, eL2=e0, eH2=e2, eta=eta, seconds=time.perf_counter() - t0)
        log.info("%s %s h=%s ndof=%d eL2=%.3e eH2=%.3e", exp.name, spec.name, h, space.ndof, e0, e2)
        if k + 1 < levels:
            mesh = refine_uniform(mesh)
            h = h / 2
        del space
    return compute_rates(rec)


def dorfler_mark(eta, theta):
    """Smallest set of cells with ``sum eta_T^2 >= theta^2 * sum eta^2``;
    ties are resolved by cell index."""
    if not 0.0 < theta < 1.0:
        raise InvalidArgumentError("theta must lie in (0, 1)")
    e2 = np.asarray(eta, dtype=float) ** 2
    order = np.lexsort((np.arange(e2.size), -e2))
    cum = np.cumsum(e2[order])
    k = int(np.searchsorted(cum, theta**2 * cum[-1] * (1 - 1e-14))) + 1
    return np.sort(order[:k])


def run_adaptive(
    experiment="nondiv-2d-singular",
    theta=0.5,
    budget=50000,
    element="v2d3",
    solver="direct",
    quad_degree=None,
    n0=4,
    out_dir=None,
    snapshot_every=1,
    max_iter=200,
    problem_kw=None,
    baseline=False,
):
    """Adaptive loop solve -> estimate -> mark -> refine.

    With ``baseline=True`` every cell is refined in each step (two bisection
    sweeps, i.e. uniform refinement) for comparison.  Returns the record
    and the list of written VTK files.
    """
    from .vtk import write_vtk

    exp = get_experiment(experiment) if isinstance(experiment, str) else experiment
    spec = parse_element(element)
    if exp.dim != 2 or spec.dim != 2:
        raise InvalidArgumentError("adaptive runs are 2D only")
    problem = exp.problem(**(problem_kw or {}))
    if problem.kind != "nondivergence":
        raise InvalidArgumentError("adaptive runs need the residual indicator of a nondivergence problem")
    rec = ConvergenceRecord(exp.name, spec.name, adaptive=True)
    mesh = build_structured(2, n0, problem.box)
    files = []
    for it in range(max_iter):
        t0 = time.perf_counter()
        mesh.check()
        space = build_space(mesh, spec, exp.bc)
        try:
            full = _solve_level(space, problem, solver, quad_degree)
        except SolverError as exc:
            log.error("adaptive step %d failed: %s", it, exc)
            rec.failed.append(it)
            break
        e0, e2 = asm.error_norms(space, full, problem.exact)
        eta_T, eta = asm.eta_indicator(space, full, problem)
        rec.add(level=it, h_or_dof=space.ndof, ndof=space.ndof, eL2=e0, eH2=e2, eta=eta, seconds=time.perf_counter() - t0)
        log.info("adaptive %d ndof=%d eH2=%.3e eta=%.3e", it, space.ndof, e2, eta)
        if out_dir is not None and (it % snapshot_every == 0):
            path = os.path.join(out_dir, f"{exp.name}_{it:03d}.vtk")
            files.append(write_vtk(path, mesh, cell_data={"eta": eta_T, "h": mesh.cell_diam}))
        if space.ndof >= budget:
            break
        if baseline:
            mesh = refine_nvb(mesh, range(mesh.n_cells))
            mesh = refine_nvb(mesh, range(mesh.n_cells))
        else:
            mesh = refine_nvb(mesh, dorfler_mark(eta_T, theta))
    return compute_rates(rec), files


def tail_slope(ndof, err, decades=1.0):
    """Least-squares slope of ``log err`` against ``log ndof`` over the last
    ``decades`` of DOF counts."""
    ndof = np.asarray(ndof, dtype=float)
    err = np.asarray(err, dtype=float)
    sel = ndof >= ndof.max() / 10**decades
    if sel.sum() < 2:
        raise InvalidArgumentError("not enough points in the final decade")
    return float(np.polyfit(np.log(ndof[sel]), np.log(err[sel]), 1)[0])
