"""Compare the numba and numpy implementations of the hot kernels.

Usage: python3 benchmarks/bench_backends.py [--repeat N]

Each kernel runs once untimed (jit warm-up), then the best of ``repeat``
runs is reported together with the max deviation between the two results.
"""

import argparse
import time

import numpy as np

from mtfem import kernels
from mtfem.mesh import _edge_lookup, _find_edges, build_structured
from mtfem.quadrature import homogeneous_exponents, rule_simplex


def best_of(fn, args, repeat):
    fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])
    times = []
    for _ in range(repeat):
        fresh = [a.copy() if isinstance(a, np.ndarray) else a for a in args]
        t0 = time.perf_counter()
        out = fn(*fresh)
        times.append(time.perf_counter() - t0)
    return min(times), out


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(o).astype(float) for o in out])
    return np.ravel(out).astype(float)


def cases():
    rng = np.random.default_rng(0)
    rule = rule_simplex(3, 20)
    pts = np.repeat(rule.points, 4, axis=0)
    exps = np.array(homogeneous_exponents(4, 10), dtype=np.int64)
    yield "tabulate_monomials (3D, deg 10)", (pts, exps)

    C = rng.standard_normal((2000, 68, 80))
    S = rng.standard_normal((2000, 80, 80))
    yield "congruence (2000 x 68 x 80)", (C, S)

    mesh = build_structured(2, 64)
    lookup = _edge_lookup(mesh)
    nvb = mesh.nvb
    ce = np.column_stack([_find_edges(lookup, nvb[:, i], nvb[:, (i + 1) % 3]) for i in range(3)])
    ref = np.zeros(mesh.n_cells, dtype=np.int64)
    marked = np.zeros(mesh.n_entities(1), dtype=np.bool_)
    marked[ce[rng.choice(mesh.n_cells, mesh.n_cells // 50, replace=False), 0]] = True
    ne = ce
    yield "nvb_closure (8192 cells)", (ne, ref, marked)

    idx = rng.integers(0, 200000, size=(100000, 31))
    vals = rng.standard_normal((100000, 31))
    yield "scatter_add (100000 x 31)", (np.zeros(200000), idx, vals)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<34} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max diff':>10}")
    for label, data in cases():
        name = label.split()[0]
        t_np, r_np = best_of(kernels.get(name, "numpy"), data, args.repeat)
        t_nb, r_nb = best_of(kernels.get(name, "numba"), data, args.repeat)
        diff = float(np.max(np.abs(_flat(r_np) - _flat(r_nb))))
        print(f"{label:<34} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
