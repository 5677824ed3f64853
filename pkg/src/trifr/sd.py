"""
Spectral-difference analysis
============================

Checks whether spectral-difference (SD) correction operators are members of
the energy-stable family, i.e. whether some admissible ``Q`` satisfies

.. math::

    \\tilde{Q} \\tilde{C}_{SD} + \\tilde{M}(\\tilde{C}_{SD} - \\tilde{C}_{DG}) = 0.

On the interval this is done with an unnormalised Legendre basis and the
symmetric interior flux points ``0`` (odd ``k``) and ``+-z_i``. On the triangle
the flux lives in the Raviart-Thomas space ``RT_k`` and is fixed by normal
components at boundary and interior flux points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as leg
from numpy.polynomial import polynomial as poly
from scipy.optimize import least_squares

from trifr.polybasis import (
    REF,
    BasisSet,
    from_barycentric,
    grad_vandermonde,
    gauss_legendre,
    vandermonde,
    volume_quadrature,
)
from trifr.qfamily import FAMILY_SIZE, q_matrix

NULL_TOL = 1e-10


class SDLayoutError(ValueError):
    pass


# {{{ interval

def _check_z(k, z):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    m = k // 2
    if len(z) != m:
        raise ValueError(f"k={k} needs {m} interior parameters, got {len(z)}")
    if np.any((z <= 0) | (z >= 1)):
        raise ValueError("interior parameters must lie in (0, 1)")
    if len(np.unique(z)) != len(z):
        raise ValueError("interior parameters must be distinct")
    return z


def sd1d_h(k: int, z) -> tuple[np.ndarray, np.ndarray]:
    """Power-series coefficients of the SD correction functions ``h_L, h_R``."""
    z = _check_z(k, z)
    core = np.array([0.0] * (k % 2) + [1.0])
    for zi in z:
        core = poly.polymul(core, [-zi * zi, 0.0, 1.0])
    den = 2 * np.prod(1 - z * z)
    hl = poly.polymul([1.0, -1.0], core) / ((-1) ** k * den)
    hr = poly.polymul([1.0, 1.0], core) / den
    return hl, hr


def interval_operators(k: int):
    """Unnormalised Legendre operators on [-1, 1]: M, D, L (rows at -1, +1)."""
    n = k + 1
    M = np.diag(2.0 / (2 * np.arange(n) + 1))
    D = np.zeros((n, n))
    for j in range(n):
        d = leg.legder(np.eye(n)[j])
        D[:len(d), j] = d
    L = leg.legvander(np.array([-1.0, 1.0]), k)
    return M, D, L


def sd1d_correction(k: int, z) -> np.ndarray:
    """Legendre coefficients of ``-h_L'`` and ``h_R'`` as two columns."""
    hl, hr = sd1d_h(k, z)
    cols = []
    for h, sgn in ((hl, -1.0), (hr, 1.0)):
        c = leg.poly2leg(poly.polyder(h))
        out = np.zeros(k + 1)
        out[:len(c)] = c
        cols.append(sgn * out)
    return np.column_stack(cols)


def q_slots(k: int) -> list[tuple[int, int]]:
    """Upper-triangle positions carrying the interval family parameters."""
    slots = [(i, j) for i in range(k + 1) for j in range(i, k + 1)
             if (i + j) % 2 == 0 and i + j >= k]
    return sorted(slots, key=lambda s: (-(s[0] + s[1]), -s[0]))


def _slot_matrix(k, slot):
    E = np.zeros((k + 1, k + 1))
    E[slot] = E[slot[::-1]] = 1.0
    return E


@dataclass
class SD1DResult:
    k: int
    z: np.ndarray
    q: np.ndarray
    Q: np.ndarray
    solve_residual: float
    constraint_residual: float
    free_dim: int
    constraints: list = field(default_factory=list)

    @property
    def in_family(self) -> bool:
        return self.solve_residual < 1e-10 and self.constraint_residual < 1e-10

    @property
    def stable(self) -> bool:
        M, _, _ = interval_operators(self.k)
        return self.in_family and bool(np.all(np.linalg.eigvalsh(M + self.Q) > 0))


def _sd1d_system(k, z):
    M, D, L = interval_operators(k)
    Csd = sd1d_correction(k, z)
    Cdg = np.linalg.solve(M, L.T)
    slots = q_slots(k)
    E = [_slot_matrix(k, s) for s in slots]
    A = np.column_stack([(e @ Csd).ravel() for e in E])
    b = (-M @ (Csd - Cdg)).ravel()
    S = np.column_stack([(e @ D + D.T @ e).ravel() for e in E])
    return A, b, S, E


def _constraint_rows(S):
    rows = []
    for r in S:
        if np.abs(r).max() < 1e-12:
            continue
        r = r / r[np.abs(r) > 1e-12][0]
        if not any(np.allclose(r, x) for x in rows):
            rows.append(r)
    return rows


def sd1d_solve_q(k: int, z) -> SD1DResult:
    """Solve for the symmetric ``Q`` reproducing SD at parameters *z* and
    measure the skew-compatibility constraint ``Q D + D^T Q = 0``.

    When the solve leaves free directions they are spent on minimising the
    constraint residual.
    """
    z = _check_z(k, z)
    A, b, S, E = _sd1d_system(k, z)
    u, s, vt = np.linalg.svd(A)
    if s[0] == 0:
        raise np.linalg.LinAlgError("degenerate SD system")
    rank = int(np.sum(s > NULL_TOL * s[0]))
    x0 = vt[:rank].T @ ((u[:, :rank].T @ b) / s[:rank])
    N = vt[rank:].T
    if N.shape[1]:
        t, *_ = np.linalg.lstsq(S @ N, -S @ x0, rcond=None)
        x = x0 + N @ t
    else:
        x = x0
    Q = sum(xi * e for xi, e in zip(x, E))
    return SD1DResult(
        k=k, z=z, q=x, Q=Q,
        solve_residual=float(np.abs(A @ x - b).max()),
        constraint_residual=float(np.abs(S @ x).max()),
        free_dim=N.shape[1],
        constraints=_constraint_rows(S))


def _residual_vec(k, z):
    A, b, S, _ = _sd1d_system(k, z)
    u, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > NULL_TOL * s[0]))
    x0 = vt[:rank].T @ ((u[:, :rank].T @ b) / s[:rank])
    N = vt[rank:].T
    if N.shape[1]:
        t, *_ = np.linalg.lstsq(S @ N, -S @ x0, rcond=None)
        x0 = x0 + N @ t
    return np.concatenate([S @ x0, A @ x0 - b])


def sd1d_root_search(k: int, n_grid: int = 60) -> list[tuple[float, ...]]:
    """All ascending parameter tuples in ``(0, 1)`` where SD lies in the
    family, found by Gauss-Newton polishing of grid minima."""
    if not 2 <= k <= 5:
        raise ValueError("root search supports k = 2..5")
    m = k // 2
    grid = np.linspace(0, 1, n_grid + 2)[1:-1]
    starts = []
    for z in itertools.combinations(grid, m):
        try:
            r = np.linalg.norm(_residual_vec(k, np.array(z)))
        except (ValueError, np.linalg.LinAlgError):
            continue
        starts.append((r, z))
    starts.sort()

    roots: list[tuple[float, ...]] = []
    for _, z in starts[: 8 * m]:
        sol = least_squares(lambda v: _residual_vec(k, np.sort(v)), np.array(z),
                            bounds=(1e-9, 1 - 1e-9), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        zz = tuple(float(v) for v in np.sort(sol.x))
        if np.linalg.norm(_residual_vec(k, np.array(zz))) > 1e-10:
            continue
        if len(set(np.round(zz, 9))) < m:
            continue
        if not any(np.allclose(zz, r, atol=1e-8) for r in roots):
            roots.append(zz)
    return sorted(roots)

# }}}


# {{{ triangle

@dataclass(frozen=True)
class RTBasis:
    """``RT_k = Q_k^2 + (x, y) Q_k^hom``; members ordered as (phi_i, 0),
    (0, phi_i), then (x phi, y phi) for the degree-k modes."""
    k: int

    @property
    def _top(self):
        b = BasisSet(self.k)
        return [i for i, d in enumerate(b.degrees) if d == self.k]

    @property
    def size(self) -> int:
        return (self.k + 1) * (self.k + 3)

    def eval(self, points):
        pts = np.atleast_2d(points)
        V = vandermonde(BasisSet(self.k), pts)
        Z = np.zeros_like(V)
        top = self._top
        X = np.hstack([V, Z, pts[:, [0]] * V[:, top]])
        Y = np.hstack([Z, V, pts[:, [1]] * V[:, top]])
        return X, Y

    def div(self, points):
        pts = np.atleast_2d(points)
        b = BasisSet(self.k)
        V = vandermonde(b, pts)
        Vx, Vy = grad_vandermonde(b, pts)
        top = self._top
        return np.hstack([Vx, Vy, 2 * V[:, top] + pts[:, [0]] * Vx[:, top]
                          + pts[:, [1]] * Vy[:, top]])


def equispaced_edge_params(k: int) -> np.ndarray:
    return -1 + (2 * np.arange(k + 1) + 1) / (k + 1)


def orbit3(z: float) -> np.ndarray:
    """Rotation orbit with barycentric coordinates (1-2z, z, z)."""
    lam = np.array([[1 - 2 * z, z, z], [z, 1 - 2 * z, z], [z, z, 1 - 2 * z]])
    return from_barycentric(lam)


def orbit6(a: float, b: float) -> np.ndarray:
    c = 1 - a - b
    lam = np.array([[a, b, c], [b, c, a], [c, a, b], [b, a, c], [a, c, b], [c, b, a]])
    return from_barycentric(lam)


@dataclass(frozen=True)
class FluxPointLayout:
    k: int
    edge_params: np.ndarray
    interior_points: np.ndarray
    interior_normals: np.ndarray
    orbit: str = ""
    params: tuple = ()

    def __post_init__(self):
        n = self.n_boundary + len(self.interior_points)
        if n != (self.k + 1) * (self.k + 3):
            raise SDLayoutError(
                f"{n} flux points, RT_{self.k} needs {(self.k + 1) * (self.k + 3)}")
        if len(self.interior_points) and not np.all(REF.contains(self.interior_points, tol=-1e-12)):
            raise SDLayoutError("interior flux points must lie strictly inside")

    @property
    def n_boundary(self) -> int:
        return 3 * len(self.edge_params)

    @property
    def boundary_points(self):
        pts, nrm = [], []
        for (a, b), n in zip(REF.edges, REF.normals):
            for s in self.edge_params:
                pts.append(a + (s + 1) / 2 * (b - a))
                nrm.append(n)
        return np.array(pts), np.array(nrm)

    @property
    def points(self):
        return np.vstack([self.boundary_points[0], self.interior_points])

    @property
    def normals(self):
        return np.vstack([self.boundary_points[1], self.interior_normals])


def _doubled(points):
    pts = np.repeat(np.atleast_2d(points), 2, axis=0)
    nrm = np.tile(np.eye(2), (len(pts) // 2, 1))
    return pts, nrm


def make_layout(k: int, orbit: str, params=(), edge_params=None) -> FluxPointLayout:
    """Standard layouts. Interior points carry two normals, along x and y.

    ``centroid`` (k=1), ``collocated`` (one 3-point orbit, k=2), ``020`` (two
    3-point orbits, k=3), ``001`` (one 6-point orbit, k=3).
    """
    s = equispaced_edge_params(k) if edge_params is None else np.asarray(edge_params)
    params = tuple(float(p) for p in params)
    if orbit == "centroid":
        inner = np.zeros((1, 2))
    elif orbit == "collocated":
        inner = orbit3(params[0])
    elif orbit == "020":
        inner = np.vstack([orbit3(params[0]), orbit3(params[1])])
    elif orbit == "001":
        inner = orbit6(params[0], params[1])
    else:
        raise ValueError(f"unknown orbit {orbit!r}")
    pts, nrm = _doubled(inner)
    return FluxPointLayout(k, s, pts, nrm, orbit, params)


def rt_vandermonde(basis: RTBasis, layout: FluxPointLayout,
                   max_cond: float = 1e12) -> np.ndarray:
    """Normal components of every RT member at every flux point."""
    if layout.k != basis.k:
        raise SDLayoutError("order mismatch")
    X, Y = basis.eval(layout.points)
    n = layout.normals
    V = X * n[:, [0]] + Y * n[:, [1]]
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > max_cond:
        raise SDLayoutError(f"layout is not unisolvent (cond = {cond:.3e})")
    return V


def sd_tri_correction(layout: FluxPointLayout):
    """Modal ``C_SD`` and exact ``C_DG`` restricted to boundary flux points."""
    k = layout.k
    rt = RTBasis(k)
    V = rt_vandermonde(rt, layout)
    lag = np.linalg.inv(V)[:, :layout.n_boundary]

    basis = BasisSet(k)
    rule = volume_quadrature(2 * k + 1)
    Vq = vandermonde(basis, rule.points)
    Csd = (Vq.T * rule.weights) @ rt.div(rule.points) @ lag

    # DG lifting of the edge Lagrange polynomials on the same points
    s = np.asarray(layout.edge_params)
    nb = len(s)
    g, gw = gauss_legendre(k + 2)
    ell = leg.legvander(g, nb - 1) @ np.linalg.inv(leg.legvander(s, nb - 1))
    Cdg = np.zeros((basis.size, 3 * nb))
    for e, ((a, b), length) in enumerate(zip(REF.edges, REF.edge_lengths)):
        phi = vandermonde(basis, a + np.outer((g + 1) / 2, b - a))
        Cdg[:, e * nb:(e + 1) * nb] = (phi.T * (gw * length / 2)) @ ell
    return Csd, Cdg


@dataclass
class TriSDReport:
    k: int
    layout: FluxPointLayout
    q: np.ndarray
    A: np.ndarray
    A0: np.ndarray = field(repr=False)
    Aq: list = field(repr=False)

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.A))

    @property
    def max_entry(self) -> float:
        return float(np.abs(self.A).max())

    @property
    def recovered(self) -> bool:
        return self.max_entry < 1e-9


def sd_tri_residual(layout: FluxPointLayout) -> TriSDReport:
    """Least-squares fit of the order-k family to
    ``A = Q C_SD + M (C_SD - C_DG)`` (modal frame, ``M = I``)."""
    k = layout.k
    if k not in FAMILY_SIZE:
        raise ValueError(f"no family for k={k}")
    Csd, Cdg = sd_tri_correction(layout)
    A0 = Csd - Cdg
    Aq = [q_matrix(tuple(e), k).Q @ Csd for e in np.eye(FAMILY_SIZE[k])]
    B = np.column_stack([a.ravel() for a in Aq])
    q, *_ = np.linalg.lstsq(B, -A0.ravel(), rcond=None)
    A = A0 + sum(qi * a for qi, a in zip(q, Aq))
    return TriSDReport(k, layout, q, A, A0, Aq)


@dataclass
class SearchReport:
    k: int
    orbit: str
    rows: list
    verdict: str
    best: tuple | None


def sd_tri_search(k: int, orbit: str, grid) -> SearchReport:
    """Sweep orbit parameters over *grid* (an iterable of parameter tuples)
    and record the residual left after the optimal family member."""
    rows = []
    for params in grid:
        params = tuple(np.atleast_1d(params).astype(float))
        try:
            rep = sd_tri_residual(make_layout(k, orbit, params))
        except SDLayoutError:
            rows.append((params, np.nan, None))
            continue
        rows.append((params, rep.max_entry, tuple(rep.q)))
    finite = [r for r in rows if np.isfinite(r[1])]
    if not finite:
        return SearchReport(k, orbit, rows, "NO SOLUTION (no unisolvent layout on grid)", None)
    best = min(finite, key=lambda r: r[1])
    if best[1] < 1e-9:
        verdict = f"RECOVERED at {best[0]} with q = {best[2]}"
    else:
        verdict = f"NO SOLUTION, min residual {best[1]:.6e} at {best[0]}"
    return SearchReport(k, orbit, rows, verdict, best)

# }}}

# vim: foldmethod=marker
