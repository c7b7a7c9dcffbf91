"""Model problems with closed-form solutions, coefficients and data."""

import numpy as np

from .assembly import ProblemSpec
from .errors import InvalidArgumentError

PI = np.pi


def _sign(v):
    # points on the discontinuity lines never reach quadrature
    return np.where(v >= 0.0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# nondivergence form, 2D, piecewise constant coefficient


def coef_2d(x):
    s = _sign(x[:, 0] * x[:, 1])
    A = np.empty((x.shape[0], 2, 2))
    A[:, 0, 0] = A[:, 1, 1] = 2.0
    A[:, 0, 1] = A[:, 1, 0] = s
    return A


def coef_3d(x):
    s = _sign(x[:, 0] * x[:, 1] * x[:, 2])
    A = np.empty((x.shape[0], 3, 3))
    A[:] = s[:, None, None]
    for a in range(3):
        A[:, a, a] = 3.0
    return A


def _kink(t):
    """g(t) = t (1 - e^{1-|t|}) with its first two derivatives."""
    e = np.exp(1.0 - np.abs(t))
    g = t * (1.0 - e)
    g1 = 1.0 - e * (1.0 - np.abs(t))
    g2 = _sign(t) * e * (2.0 - np.abs(t))
    return g, g1, g2


def exact_nondiv_2d_1(x):
    gx, gx1, gx2 = _kink(x[:, 0])
    gy, gy1, gy2 = _kink(x[:, 1])
    v = gx * gy
    g = np.column_stack([gx1 * gy, gx * gy1])
    h = np.empty((x.shape[0], 2, 2))
    h[:, 0, 0] = gx2 * gy
    h[:, 1, 1] = gx * gy2
    h[:, 0, 1] = h[:, 1, 0] = gx1 * gy1
    return v, g, h


def _nondiv_rhs(coef, exact):
    def f(x):
        _, _, H = exact(x)
        return np.einsum("pab,pab->p", coef(x), H)

    return f


def nondiv_2d_1():
    return ProblemSpec(
        name="nondiv-2d-1",
        dim=2,
        kind="nondivergence",
        box=np.array([[-1.0, -1.0], [1.0, 1.0]]),
        exact=exact_nondiv_2d_1,
        rhs=_nondiv_rhs(coef_2d, exact_nondiv_2d_1),
        coef=coef_2d,
        lam=1.0,
        Lam=3.0,
    )


def exact_singular(iota):
    """u = r^{3/2} h(y) with a boundary layer of width ~iota at y = 1."""
    den = 1.0 - np.exp(-1.0 / iota)
    em = np.exp(-1.0 / iota)

    def u(x):
        X, Y = x[:, 0], x[:, 1]
        r = np.hypot(X, Y)
        rs = np.where(r > 0, r, 1.0)
        E = np.exp((Y - 1.0) / (2.0 * iota))
        h = (Y + 1.0) / 2.0 + (em - E) / den
        h1 = 0.5 - E / (2.0 * iota * den)
        h2 = -E / (4.0 * iota**2 * den)
        phi = r**1.5
        c = np.where(r > 0, 1.5 / np.sqrt(rs), 0.0)
        px, py = c * X, c * Y
        ux = X / rs
        uy = Y / rs
        pxx = c * (1.0 - 0.5 * ux * ux)
        pyy = c * (1.0 - 0.5 * uy * uy)
        pxy = -0.5 * c * ux * uy
        v = phi * h
        g = np.column_stack([px * h, py * h + phi * h1])
        H = np.empty((x.shape[0], 2, 2))
        H[:, 0, 0] = pxx * h
        H[:, 0, 1] = H[:, 1, 0] = pxy * h + px * h1
        H[:, 1, 1] = pyy * h + 2.0 * py * h1 + phi * h2
        return v, g, H

    return u


def nondiv_2d_singular(iota=0.1):
    if not iota > 0:
        raise InvalidArgumentError("iota must be positive")
    ex = exact_singular(iota)
    return ProblemSpec(
        name="nondiv-2d-singular",
        dim=2,
        kind="nondivergence",
        box=np.array([[-1.0, -1.0], [1.0, 1.0]]),
        exact=ex,
        rhs=_nondiv_rhs(coef_2d, ex),
        coef=coef_2d,
        lam=1.0,
        Lam=3.0,
        inhomogeneous=True,
        notes={"iota": iota},
    )


def exact_sin3(x):
    s = np.sin(PI * x)
    c = np.cos(PI * x)
    v = s[:, 0] * s[:, 1] * s[:, 2]
    g = np.empty_like(x)
    H = np.empty((x.shape[0], 3, 3))
    for a in range(3):
        o = [b for b in range(3) if b != a]
        g[:, a] = PI * c[:, a] * s[:, o[0]] * s[:, o[1]]
        H[:, a, a] = -(PI**2) * v
    for a, b in ((0, 1), (0, 2), (1, 2)):
        o = 3 - a - b
        H[:, a, b] = H[:, b, a] = PI**2 * c[:, a] * c[:, b] * s[:, o]
    return v, g, H


def nondiv_3d():
    return ProblemSpec(
        name="nondiv-3d",
        dim=3,
        kind="nondivergence",
        box=np.array([[-1.0] * 3, [1.0] * 3]),
        exact=exact_sin3,
        rhs=_nondiv_rhs(coef_3d, exact_sin3),
        coef=coef_3d,
        lam=1.0,
        Lam=5.0,
    )


# ---------------------------------------------------------------------------
# biharmonic, u = prod sin^2(pi x_a)


def _sin2(t):
    """a(t) = sin^2(pi t) and derivatives up to order four."""
    s2 = np.sin(2 * PI * t)
    c2 = np.cos(2 * PI * t)
    return (1.0 - c2) / 2.0, PI * s2, 2 * PI**2 * c2, -8 * PI**4 * c2


def exact_sin2_product(dim):
    def u(x):
        parts = [_sin2(x[:, a]) for a in range(dim)]
        P = x.shape[0]
        v = np.ones(P)
        for a in range(dim):
            v = v * parts[a][0]
        g = np.empty((P, dim))
        H = np.empty((P, dim, dim))
        for a in range(dim):
            rest = np.ones(P)
            for b in range(dim):
                if b != a:
                    rest = rest * parts[b][0]
            g[:, a] = parts[a][1] * rest
            H[:, a, a] = parts[a][2] * rest
            for b in range(a + 1, dim):
                r2 = np.ones(P)
                for c in range(dim):
                    if c not in (a, b):
                        r2 = r2 * parts[c][0]
                H[:, a, b] = H[:, b, a] = parts[a][1] * parts[b][1] * r2
        return v, g, H

    def bilap(x):
        parts = [_sin2(x[:, a]) for a in range(dim)]
        P = x.shape[0]
        out = np.zeros(P)
        for a in range(dim):
            term = parts[a][3]
            for b in range(dim):
                if b != a:
                    term = term * parts[b][0]
            out += term
            for b in range(a + 1, dim):
                term = 2.0 * parts[a][2] * parts[b][2]
                for c in range(dim):
                    if c not in (a, b):
                        term = term * parts[c][0]
                out += term
        return out

    return u, bilap


def biharmonic(dim):
    u, f = exact_sin2_product(dim)
    return ProblemSpec(
        name=f"biharmonic-{dim}d",
        dim=dim,
        kind="biharmonic",
        box=np.array([[0.0] * dim, [1.0] * dim]),
        exact=u,
        rhs=f,
    )


def polynomial_problem(dim, coeffs, coef=None, kind="nondivergence", box=None):
    """Problem whose exact solution is a global polynomial; used to check
    consistency and reproduction."""
    from .femspace import polynomial_function

    ex = polynomial_function(coeffs, dim)
    box = np.array([[0.0] * dim, [1.0] * dim]) if box is None else np.asarray(box, dtype=float)
    if kind == "nondivergence":
        coef = coef or (lambda x: np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)).copy())
        rhs = _nondiv_rhs(coef, ex)
    else:
        raise InvalidArgumentError("polynomial problems are nondivergence only")
    return ProblemSpec("polynomial", dim, kind, box, ex, rhs, coef, inhomogeneous=True)
