import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mtfem import kernels
from mtfem.quadrature import homogeneous_exponents


def _both(name):
    return kernels.get(name, "numpy"), kernels.get(name, "numba")


@settings(max_examples=25, deadline=None)
@given(nvars=st.integers(1, 4), degree=st.integers(0, 7), npts=st.integers(1, 20), seed=st.integers(0, 10**6))
def test_tabulate_monomials_backends_agree(nvars, degree, npts, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(npts, nvars))
    ex = np.array(homogeneous_exponents(nvars, degree), dtype=np.int64)
    a, b = _both("tabulate_monomials")
    ra, rb = a(pts, ex), b(pts, ex)
    for x, y in zip(ra, rb):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)


def test_tabulate_monomials_derivatives_by_finite_differences():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.2, 0.8, size=(5, 3))
    ex = np.array(homogeneous_exponents(3, 4), dtype=np.int64)
    val, d1, d2 = kernels.tabulate_monomials(pts, ex)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        vp, d1p, _ = kernels.tabulate_monomials(pts + e, ex)
        vm, d1m, _ = kernels.tabulate_monomials(pts - e, ex)
        np.testing.assert_allclose((vp - vm) / (2 * h), d1[..., i], rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose((d1p - d1m) / (2 * h), d2[..., i], rtol=1e-6, atol=1e-7)


@settings(max_examples=20, deadline=None)
@given(nc=st.integers(1, 6), n=st.integers(1, 7), s=st.integers(1, 8), seed=st.integers(0, 10**6))
def test_congruence_backends_agree(nc, n, s, seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((nc, n, s))
    S = rng.standard_normal((nc, s, s))
    a, b = _both("congruence")
    ref = np.einsum("cks,cst,clt->ckl", C, S, C)
    np.testing.assert_allclose(a(C, S), ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(b(C, S), ref, rtol=1e-12, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(index=arrays(np.int64, (7, 4), elements=st.integers(0, 9)), seed=st.integers(0, 1000))
def test_scatter_add_backends_agree(index, seed):
    vals = np.random.default_rng(seed).standard_normal(index.shape)
    a, b = _both("scatter_add")
    ref = np.zeros(10)
    np.add.at(ref, index, vals)
    np.testing.assert_allclose(a(np.zeros(10), index, vals), ref, atol=1e-12)
    np.testing.assert_allclose(b(np.zeros(10), index, vals), ref, atol=1e-12)


def test_nvb_closure_backends_agree():
    rng = np.random.default_rng(5)
    cell_edges = rng.integers(0, 40, size=(60, 3)).astype(np.int64)
    ref_local = rng.integers(0, 3, size=60).astype(np.int64)
    marked = rng.random(40) < 0.1
    a, b = _both("nvb_closure")
    ma = a(cell_edges, ref_local, marked.copy())
    mb = b(cell_edges, ref_local, marked.copy())
    np.testing.assert_array_equal(ma, mb)
    # closure property: a cell with any marked edge has its refinement edge marked
    ref = cell_edges[np.arange(60), ref_local]
    hit = ma[cell_edges].any(axis=1)
    assert np.all(ma[ref[hit]])


@pytest.mark.parametrize("value,expected", [("numpy", "numpy"), ("numba", "numba")])
def test_backend_env_flag(value, expected):
    env = dict(os.environ, MTFEM_BACKEND=value)
    out = subprocess.run(
        [sys.executable, "-c", "from mtfem import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected


def test_backend_env_flag_rejects_unknown():
    env = dict(os.environ, MTFEM_BACKEND="fortran")
    out = subprocess.run([sys.executable, "-c", "import mtfem.kernels"], env=env, capture_output=True, text=True)
    assert out.returncode != 0
    assert "MTFEM_BACKEND" in out.stderr
