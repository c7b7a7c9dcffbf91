"""Hot numeric kernels with a numba and a pure-numpy implementation.

The backend is chosen once at import time from the ``MTFEM_BACKEND``
environment variable (``numba`` or ``numpy``).  When unset, numba is used if
it imports cleanly.  Both implementations of every kernel are always
importable under the ``*_numpy`` / ``*_numba`` names so that tests and the
benchmark can compare them directly.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _select_backend():
    requested = os.environ.get("MTFEM_BACKEND", "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(f"MTFEM_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numpy" or numba is None:
        return "numpy"
    return "numba"


BACKEND = _select_backend()


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)


# ---------------------------------------------------------------------------
# monomial tabulation: values and first/second derivatives of lambda^alpha


def tabulate_monomials_numpy(points, exponents):
    """Values, gradients and Hessians of monomials w.r.t. every variable.

    Parameters
    ----------
    points : (P, n) array
    exponents : (m, n) integer array

    Returns
    -------
    val : (P, m)
    d1 : (P, m, n)
    d2 : (P, m, n, n)
    """
    points = np.asarray(points, dtype=float)
    exponents = np.asarray(exponents, dtype=np.int64)
    P, n = points.shape
    m = exponents.shape[0]
    maxe = int(exponents.max()) if exponents.size else 0
    # pw[p, i, k] = x_i^k
    pw = np.ones((P, n, maxe + 1))
    for k in range(1, maxe + 1):
        pw[:, :, k] = pw[:, :, k - 1] * points
    idx = np.arange(n)

    def factor(shift):
        e = exponents - shift
        ok = np.all(e >= 0, axis=1)
        e = np.clip(e, 0, None)
        f = pw[:, idx[None, :], e]  # (P, m, n)
        return np.where(ok[None, :], f.prod(axis=2), 0.0)

    val = factor(np.zeros(n, dtype=np.int64))
    d1 = np.zeros((P, m, n))
    d2 = np.zeros((P, m, n, n))
    eye = np.eye(n, dtype=np.int64)
    for i in range(n):
        d1[:, :, i] = exponents[:, i] * factor(eye[i])
        for j in range(i, n):
            if i == j:
                c = exponents[:, i] * (exponents[:, i] - 1)
            else:
                c = exponents[:, i] * exponents[:, j]
            d2[:, :, i, j] = c * factor(eye[i] + eye[j])
            d2[:, :, j, i] = d2[:, :, i, j]
    return val, d1, d2


@_njit
def tabulate_monomials_numba(points, exponents):
    P, n = points.shape
    m = exponents.shape[0]
    val = np.zeros((P, m))
    d1 = np.zeros((P, m, n))
    d2 = np.zeros((P, m, n, n))
    e = np.zeros(n, dtype=np.int64)
    for p in range(P):
        for k in range(m):
            for i in range(n):
                e[i] = exponents[k, i]
            v = 1.0
            for i in range(n):
                v *= points[p, i] ** e[i]
            val[p, k] = v
            for i in range(n):
                if e[i] == 0:
                    continue
                g = float(e[i])
                for r in range(n):
                    er = e[r] - 1 if r == i else e[r]
                    g *= points[p, r] ** er
                d1[p, k, i] = g
                for j in range(i, n):
                    if i == j:
                        if e[i] < 2:
                            continue
                        c = float(e[i] * (e[i] - 1))
                    else:
                        if e[j] == 0:
                            continue
                        c = float(e[i] * e[j])
                    h = c
                    for r in range(n):
                        er = e[r]
                        if r == i:
                            er -= 1
                        if r == j:
                            er -= 1
                        h *= points[p, r] ** er
                    d2[p, k, i, j] = h
                    d2[p, k, j, i] = h
    return val, d1, d2


# ---------------------------------------------------------------------------
# batched congruence K[c] = C[c] @ S[c] @ C[c]^T


def congruence_numpy(C, S):
    return np.matmul(np.matmul(C, S), np.swapaxes(C, 1, 2))


@_njit
def congruence_numba(C, S):
    nc, k, s = C.shape
    out = np.empty((nc, k, k))
    tmp = np.empty((k, s))
    for c in range(nc):
        tmp[:, :] = C[c] @ S[c]
        out[c] = tmp @ C[c].T
    return out


# ---------------------------------------------------------------------------
# newest-vertex-bisection closure


def nvb_closure_numpy(cell_edges, ref_local, marked):
    """Propagate edge marks until every cell with a marked edge has its
    refinement edge marked.  ``marked`` is modified in place and returned."""
    ref_edge = cell_edges[np.arange(cell_edges.shape[0]), ref_local]
    while True:
        hit = marked[cell_edges].any(axis=1)
        todo = hit & ~marked[ref_edge]
        if not todo.any():
            return marked
        marked[ref_edge[todo]] = True


@_njit
def nvb_closure_numba(cell_edges, ref_local, marked):
    nc = cell_edges.shape[0]
    changed = True
    while changed:
        changed = False
        for c in range(nc):
            r = cell_edges[c, ref_local[c]]
            if marked[r]:
                continue
            for k in range(cell_edges.shape[1]):
                if marked[cell_edges[c, k]]:
                    marked[r] = True
                    changed = True
                    break
    return marked


# ---------------------------------------------------------------------------
# scatter-add of cell vectors


def scatter_add_numpy(out, index, values):
    np.add.at(out, index.ravel(), values.ravel())
    return out


@_njit
def scatter_add_numba(out, index, values):
    nc, k = index.shape
    for c in range(nc):
        for j in range(k):
            out[index[c, j]] += values[c, j]
    return out


_TABLE = {
    "tabulate_monomials": (tabulate_monomials_numpy, tabulate_monomials_numba),
    "congruence": (congruence_numpy, congruence_numba),
    "nvb_closure": (nvb_closure_numpy, nvb_closure_numba),
    "scatter_add": (scatter_add_numpy, scatter_add_numba),
}


def get(name, backend=None):
    """Return kernel ``name`` for ``backend`` (default: the active one)."""
    backend = backend or BACKEND
    impl_np, impl_nb = _TABLE[name]
    return impl_nb if backend == "numba" else impl_np


def tabulate_monomials(points, exponents):
    return get("tabulate_monomials")(
        np.ascontiguousarray(points, dtype=float), np.ascontiguousarray(exponents, dtype=np.int64)
    )


def congruence(C, S):
    return get("congruence")(np.ascontiguousarray(C), np.ascontiguousarray(S))


def nvb_closure(cell_edges, ref_local, marked):
    return get("nvb_closure")(
        np.ascontiguousarray(cell_edges, dtype=np.int64),
        np.ascontiguousarray(ref_local, dtype=np.int64),
        marked,
    )


def scatter_add(out, index, values):
    return get("scatter_add")(out, np.ascontiguousarray(index, dtype=np.int64), np.ascontiguousarray(values))
