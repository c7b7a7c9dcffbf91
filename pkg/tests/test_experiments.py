import csv
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtfem import experiments as ex
from mtfem.errors import InvalidArgumentError


def test_registry_names():
    assert set(ex.REGISTRY) == {"nondiv-2d-1", "nondiv-2d-singular", "biharmonic-2d", "nondiv-3d", "biharmonic-3d"}
    assert [n for n, e in ex.REGISTRY.items() if e.adaptive] == ["nondiv-2d-singular"]
    with pytest.raises(InvalidArgumentError):
        ex.get_experiment("laplace")


def test_n_for_h():
    assert ex.REGISTRY["nondiv-2d-1"].n_for_h(Fraction(1, 16)) == 16
    # biharmonic-2d lives on the unit square: h = 1/16 means 8 subdivisions
    assert ex.REGISTRY["biharmonic-2d"].n_for_h(Fraction(1, 16)) == 8
    assert ex.REGISTRY["nondiv-3d"].n_for_h(Fraction(1, 4)) == 4
    with pytest.raises(InvalidArgumentError):
        ex.REGISTRY["biharmonic-2d"].n_for_h(Fraction(1, 3))


def _record(hs, errs, adaptive=False):
    rec = ex.ConvergenceRecord("x", "y", adaptive=adaptive)
    for k, (h, e) in enumerate(zip(hs, errs)):
        rec.add(level=k, h_or_dof=h, ndof=int(h) if adaptive else 10 * 4**k, eL2=e, eH2=e, eta=e)
    return ex.compute_rates(rec)


def test_uniform_rates():
    rec = _record([0.5, 0.25, 0.125], [1.0, 0.25, 0.0625])
    assert math.isnan(rec.rows[0]["rateH2"])
    assert rec.rows[1]["rateH2"] == pytest.approx(2.0)
    assert rec.rows[2]["rateL2"] == pytest.approx(2.0)
    assert ex.compute_rate_pair(8.0, 1.0) == pytest.approx(3.0)
    assert math.isnan(ex.compute_rate_pair(0.0, 1.0))


def test_adaptive_rates_and_zero_error():
    rec = _record([100, 1000, 10000], [1.0, 0.1, 0.0], adaptive=True)
    assert rec.rows[1]["rateH2"] == pytest.approx(-1.0)
    assert math.isnan(rec.rows[2]["rateH2"])


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, -0.1), st.floats(0.1, 10.0))
def test_tail_slope_of_power_law(p, c):
    n = np.geomspace(100, 1e5, 25)
    assert ex.tail_slope(n, c * n**p) == pytest.approx(p, abs=1e-10)


def test_tail_slope_needs_points():
    with pytest.raises(InvalidArgumentError):
        ex.tail_slope([1, 1e6], [1.0, 1e-3])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=60), st.floats(0.05, 0.95))
def test_dorfler_minimal(eta, theta):
    eta = np.array(eta)
    if not np.any(eta > 0):
        eta = eta + 1.0
    m = ex.dorfler_mark(eta, theta)
    total = np.sum(eta**2)
    assert np.sum(eta[m] ** 2) >= theta**2 * total * (1 - 1e-12)
    # no set with one cell fewer carries the fraction: drop the smallest marked
    rest = np.sort(eta[m] ** 2)[1:]
    assert rest.sum() < theta**2 * total or m.size == 1
    # marked cells dominate unmarked ones
    unmarked = np.setdiff1d(np.arange(eta.size), m)
    if unmarked.size:
        assert eta[m].min() >= eta[unmarked].max()


def test_dorfler_invalid_theta():
    for t in (0.0, 1.0, -0.2):
        with pytest.raises(InvalidArgumentError):
            ex.dorfler_mark(np.ones(3), t)


def test_csv_roundtrip(tmp_path):
    rec = _record([0.5, 0.25], [1e-2, 2.5e-3])
    p = rec.to_csv(tmp_path / "a.csv", timings=False)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == ex.COLUMNS
    assert rows[2][ex.COLUMNS.index("seconds")] == ""
    assert float(rows[2][ex.COLUMNS.index("eH2")]) == pytest.approx(2.5e-3)
    assert float(rows[2][ex.COLUMNS.index("rateH2")]) == pytest.approx(2.0, rel=1e-5)
    assert rows[1][ex.COLUMNS.index("rateL2")] == "nan"
    # six significant digits in scientific notation
    assert rows[1][ex.COLUMNS.index("eL2")] == "1.00000e-02"


def test_convergence_small_run():
    rec = ex.run_convergence("nondiv-2d-1", element="v2d3", levels=2, h0=Fraction(1, 4))
    assert [r["ndof"] for r in rec.rows][0] < rec.rows[1]["ndof"]
    assert rec.rows[1]["eH2"] < rec.rows[0]["eH2"]
    assert rec.rows[1]["rateH2"] > 0.5
    assert not rec.failed


def test_convergence_invalid():
    with pytest.raises(InvalidArgumentError):
        ex.run_convergence("nondiv-2d-1", element="v3d5", levels=2)
    with pytest.raises(InvalidArgumentError):
        ex.run_convergence("nondiv-2d-1", levels=1)
    with pytest.raises(InvalidArgumentError):
        ex.run_adaptive("biharmonic-2d", budget=10)
    with pytest.raises(InvalidArgumentError):
        ex.run_adaptive("nondiv-3d", budget=10)


def test_adaptive_small_run(tmp_path):
    rec, files = ex.run_adaptive("nondiv-2d-singular", budget=1500, out_dir=str(tmp_path))
    nd = rec.column("ndof")
    assert np.all(np.diff(nd) > 0) and nd[-1] >= 1500
    assert len(files) == len(rec.rows)
    assert rec.adaptive and not rec.failed
