"""
Reference triangle, orthonormal Dubiner basis and quadrature
============================================================

The reference element is the equilateral triangle with vertices
``(-1, -1/sqrt(3))``, ``(1, -1/sqrt(3))`` and ``(0, 2/sqrt(3))``; its centroid
is the origin and its area is ``sqrt(3)``.

Modes are indexed by a pair ``(v, w)`` with ``v + w <= k`` and stored
``v``-major: all ``v = 0`` modes with ``w = 0..k``, then ``v = 1`` with
``w = 0..k-1`` and so on. This is the layout in which the closed-form
norm-modification matrices of :mod:`trifr.qfamily` are written.

.. autofunction:: jacobi
.. autofunction:: grad_jacobi
.. autoclass:: BasisSet
.. autofunction:: vandermonde
.. autofunction:: grad_vandermonde
.. autofunction:: volume_quadrature
.. autofunction:: edge_flux_points
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre

SQRT3 = math.sqrt(3.0)

# {{{ reference triangle


@dataclass(frozen=True)
class ReferenceTriangle:
    vertices: np.ndarray = field(default_factory=lambda: np.array([
        [-1.0, -1.0 / SQRT3],
        [1.0, -1.0 / SQRT3],
        [0.0, 2.0 / SQRT3]]))

    @property
    def area(self) -> float:
        (x0, y0), (x1, y1), (x2, y2) = self.vertices
        return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))

    @property
    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Edges as ``(start, end)`` pairs, counterclockwise from the bottom."""
        v = self.vertices
        return [(v[i], v[(i + 1) % 3]) for i in range(3)]

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.array([np.linalg.norm(b - a) for a, b in self.edges])

    @property
    def normals(self) -> np.ndarray:
        out = []
        for a, b in self.edges:
            t = (b - a) / np.linalg.norm(b - a)
            out.append([t[1], -t[0]])
        return np.array(out)

    def contains(self, points, tol=1e-12) -> np.ndarray:
        lam = barycentric(np.atleast_2d(points))
        return np.all(lam >= -tol, axis=1)


REF = ReferenceTriangle()


def barycentric(points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of *points* with respect to :data:`REF`."""
    points = np.atleast_2d(points)
    v = REF.vertices
    T = np.column_stack([v[0] - v[2], v[1] - v[2]])
    l01 = np.linalg.solve(T, (points - v[2]).T).T
    return np.column_stack([l01, 1.0 - l01.sum(axis=1)])


def from_barycentric(lam: np.ndarray) -> np.ndarray:
    return np.atleast_2d(lam) @ REF.vertices

# }}}


# {{{ jacobi polynomials

def _check_jacobi_params(alpha, beta):
    if alpha <= -1 or beta <= -1:
        raise ValueError(f"Jacobi parameters must exceed -1, got ({alpha}, {beta})")


def jacobi(alpha: float, beta: float, n: int, x) -> np.ndarray:
    """Jacobi polynomial of degree *n*, orthonormal on ``[-1, 1]`` under the
    weight ``(1-x)^alpha (1+x)^beta``.
    """
    _check_jacobi_params(alpha, beta)
    if n < 0:
        raise ValueError("degree must be non-negative")

    x = np.asarray(x, dtype=np.float64)
    ab = alpha + beta

    gamma0 = np.exp((ab + 1) * math.log(2.0)
                    + gammaln(alpha + 1) + gammaln(beta + 1) - gammaln(ab + 2))
    p_prev = np.full_like(x, 1.0 / math.sqrt(gamma0))
    if n == 0:
        return p_prev

    gamma1 = (alpha + 1) * (beta + 1) / (ab + 3) * gamma0
    p_cur = ((ab + 2) * x / 2 + (alpha - beta) / 2) / math.sqrt(gamma1)
    if n == 1:
        return p_cur

    a_old = 2 / (2 + ab) * math.sqrt((alpha + 1) * (beta + 1) / (ab + 3))
    for i in range(1, n):
        h1 = 2 * i + ab
        a_new = 2 / (h1 + 2) * math.sqrt(
            (i + 1) * (i + 1 + ab) * (i + 1 + alpha) * (i + 1 + beta)
            / (h1 + 1) / (h1 + 3))
        b_new = -(alpha**2 - beta**2) / h1 / (h1 + 2)
        p_prev, p_cur = p_cur, 1 / a_new * (-a_old * p_prev + (x - b_new) * p_cur)
        a_old = a_new

    return p_cur


def grad_jacobi(alpha: float, beta: float, n: int, x) -> np.ndarray:
    """Derivative of :func:`jacobi` with respect to *x*."""
    _check_jacobi_params(alpha, beta)
    x = np.asarray(x, dtype=np.float64)
    if n == 0:
        return np.zeros_like(x)
    return math.sqrt(n * (n + alpha + beta + 1)) * jacobi(alpha + 1, beta + 1, n - 1, x)

# }}}


# {{{ dubiner basis

def mode_count(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def mode_indices(k: int) -> list[tuple[int, int]]:
    """``(v, w)`` pairs in storage order."""
    return [(v, w) for v in range(k + 1) for w in range(k + 1 - v)]


def _collapse(x, y):
    # a = 3x / (2 - sqrt(3) y), b = (2 sqrt(3) y - 1) / 3
    b = (2 * SQRT3 * y - 1) / 3
    denom = 2 - SQRT3 * y
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(np.abs(denom) > 1e-14, 3 * x / np.where(denom == 0, 1, denom), -1.0)
    return a, b


_NORM = 2.0 / 3.0**0.25


def _dubiner(v, w, x, y):
    a, b = _collapse(x, y)
    return _NORM * (1 - b)**v * jacobi(0, 0, v, a) * jacobi(2 * v + 1, 0, w, b)


def _grad_dubiner(v, w, x, y):
    # a = 2x/(1-b): da/dx = 2/(1-b), da/dy = (2/sqrt3) a/(1-b), db/dy = 2/sqrt3
    a, b = _collapse(x, y)
    pa = jacobi(0, 0, v, a)
    pb = jacobi(2 * v + 1, 0, w, b)
    dpb = grad_jacobi(2 * v + 1, 0, w, b)
    one_b = 1 - b
    if v == 0:
        return np.zeros_like(x), (2 / SQRT3) * _NORM * pa * dpb

    dpa = grad_jacobi(0, 0, v, a)
    low = one_b**(v - 1)
    dx = 2 * _NORM * low * dpa * pb
    dy = (2 / SQRT3) * _NORM * (one_b**v * pa * dpb + low * (a * dpa - v * pa) * pb)
    return dx, dy


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal total-degree-*k* Dubiner basis on :data:`REF`."""

    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("order must be non-negative")

    @property
    def size(self) -> int:
        return mode_count(self.k)

    @property
    def indices(self) -> list[tuple[int, int]]:
        return mode_indices(self.k)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([v + w for v, w in self.indices])

    def _vw(self, i):
        if not 0 <= i < self.size:
            raise IndexError(f"mode {i} out of range for k={self.k}")
        return self.indices[i]

    def eval(self, i: int, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return _dubiner(*self._vw(i), p[:, 0], p[:, 1])

    def grad(self, i: int, points) -> tuple[np.ndarray, np.ndarray]:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return _grad_dubiner(*self._vw(i), p[:, 0], p[:, 1])


def dubiner_eval(k: int, i: int, point) -> float:
    return float(BasisSet(k).eval(i, point)[0])


def dubiner_grad(k: int, i: int, point) -> tuple[float, float]:
    dx, dy = BasisSet(k).grad(i, point)
    return float(dx[0]), float(dy[0])


def vandermonde(basis: BasisSet, points) -> np.ndarray:
    """Matrix with entry ``(r, c) = phi_c(points[r])``."""
    points = np.atleast_2d(points)
    return np.column_stack([basis.eval(i, points) for i in range(basis.size)])


def grad_vandermonde(basis: BasisSet, points) -> tuple[np.ndarray, np.ndarray]:
    points = np.atleast_2d(points)
    grads = [basis.grad(i, points) for i in range(basis.size)]
    return (np.column_stack([g[0] for g in grads]),
            np.column_stack([g[1] for g in grads]))

# }}}


# {{{ quadrature

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    strength: int

    def __len__(self):
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def collapsed_rule(strength: int) -> QuadratureRule:
    """Conical product Gauss rule on :data:`REF` exact to total degree *strength*.

    Legendre points in the collapsed ``a`` direction and Gauss-Jacobi(1, 0)
    points in ``b``; ``dA = (sqrt(3)/4) (1 - b) da db``.
    """
    n = strength // 2 + 1
    a, wa = roots_legendre(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(wa, wb) * SQRT3 / 4
    x = A * (1 - B) / 2
    y = (3 * B + 1) / (2 * SQRT3)
    return QuadratureRule(np.column_stack([x.ravel(), y.ravel()]), W.ravel(), 2 * n - 1)


def _symmetry_images(points: np.ndarray) -> list[np.ndarray]:
    out = []
    for j in range(3):
        th = 2 * np.pi * j / 3
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        rot = points @ R.T
        out.append(rot)
        out.append(rot * np.array([-1.0, 1.0]))
    return out


def symmetrized_rule(strength: int) -> QuadratureRule:
    """Average :func:`collapsed_rule` over the six symmetries of the triangle.

    The result is invariant under 120 degree rotations and the reflection
    ``x -> -x`` and keeps the strength and positivity of the source rule.
    Coincident points are merged.
    """
    base = collapsed_rule(strength)
    pts = np.vstack(_symmetry_images(base.points))
    wts = np.tile(base.weights, 6) / 6

    key = np.round(pts, 13)
    order = np.lexsort((key[:, 1], key[:, 0]))
    merged_p, merged_w = [], []
    for idx in order:
        if merged_p and np.all(np.abs(pts[idx] - merged_p[-1]) < 1e-13):
            merged_w[-1] += wts[idx]
        else:
            merged_p.append(pts[idx])
            merged_w.append(wts[idx])
    return QuadratureRule(np.array(merged_p), np.array(merged_w), base.strength)


MAX_STRENGTH = 23
EMBEDDED_STRENGTHS = tuple(range(1, MAX_STRENGTH + 1, 2))


def _table_name(strength: int) -> str:
    return f"tri_strength_{strength:02d}.txt"


def write_rule(rule: QuadratureRule, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# strength {rule.strength}; columns x, y, w\n")
        for (x, y), w in zip(rule.points, rule.weights):
            fh.write(f"{x:.17e}, {y:.17e}, {w:.17e}\n")


@lru_cache(maxsize=None)
def _load_rule(strength: int) -> QuadratureRule:
    text = resources.files("trifr.data").joinpath(_table_name(strength)).read_text()
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    data = np.array([[float(v) for v in r.split(",")] for r in rows])
    return QuadratureRule(data[:, :2].copy(), data[:, 2].copy(), strength)


def volume_quadrature(strength: int) -> QuadratureRule:
    """Smallest embedded symmetric volume rule of at least *strength*."""
    if strength > MAX_STRENGTH:
        raise ValueError(f"no embedded rule of strength {strength} (max {MAX_STRENGTH})")
    s = next(s for s in EMBEDDED_STRENGTHS if s >= max(strength, 1))
    return _load_rule(s)


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return x, w


def edge_flux_points(k: int, params=None) -> list[QuadratureRule]:
    """Per-edge flux points of :data:`REF`.

    Each rule holds physical points on the edge (ordered along the
    counterclockwise direction) and weights for the edge's arc length.
    By default the points are the ``k+1``-point Gauss-Legendre rule;
    *params* may give other positions on ``[-1, 1]`` (weights are then the
    interpolatory ones).
    """
    if params is None:
        s, w = gauss_legendre(k + 1)
    else:
        s = np.asarray(params, dtype=np.float64)
        w = interpolatory_weights(s)
    out = []
    for (a, b), length in zip(REF.edges, REF.edge_lengths):
        pts = a + np.outer((s + 1) / 2, b - a)
        out.append(QuadratureRule(pts, w * length / 2, 2 * len(s) - 1 if params is None
                                  else len(s) - 1))
    return out


def interpolatory_weights(s: np.ndarray) -> np.ndarray:
    """Weights on ``[-1, 1]`` integrating the Lagrange basis on nodes *s*."""
    n = len(s)
    V = np.polynomial.legendre.legvander(s, n - 1)
    rhs = np.zeros(n)
    rhs[0] = 2.0
    return np.linalg.solve(V.T, rhs)

# }}}


# {{{ nodal point sets

_WARP_ALPHA = [0.0000, 0.0000, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999,
               1.2832, 1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258]


def _gauss_lobatto(n: int) -> np.ndarray:
    if n == 1:
        return np.array([-1.0, 1.0])
    x, _ = roots_jacobi(n - 1, 1.0, 1.0)
    return np.concatenate([[-1.0], x, [1.0]])


def _warp(n, r):
    req = np.linspace(-1, 1, n + 1)
    lgl = _gauss_lobatto(n)
    L = np.polynomial.legendre
    # Lagrange interpolant on equispaced nodes of the displacement
    Veq = L.legvander(req, n)
    coef = np.linalg.solve(Veq, lgl - req)
    warp = L.legval(r, coef)
    zerof = np.abs(r) < 1 - 1e-10
    sf = 1 - (zerof * r)**2
    return warp / np.where(sf == 0, 1, sf) * zerof


def warp_blend_nodes(k: int) -> np.ndarray:
    """Symmetric interpolation nodes on :data:`REF` (warp and blend)."""
    if k == 0:
        return np.zeros((1, 2))
    alpha = _WARP_ALPHA[k - 1] if k <= len(_WARP_ALPHA) else 5 / 3
    lam = np.array([(i, j, k - i - j) for i in range(k + 1) for j in range(k + 1 - i)],
                   dtype=np.float64) / k
    # lam columns weight vertices 2, 0, 1 as in the classical construction
    L1, L2, L3 = lam[:, 0], lam[:, 2], lam[:, 1]
    X = -L2 + L3
    Y = (-L2 - L3 + 2 * L1) / SQRT3

    b1 = 4 * L2 * L3
    b2 = 4 * L1 * L3
    b3 = 4 * L1 * L2
    w1 = _warp(k, L3 - L2)
    w2 = _warp(k, L1 - L3)
    w3 = _warp(k, L2 - L1)
    f1 = b1 * w1 * (1 + (alpha * L1)**2)
    f2 = b2 * w2 * (1 + (alpha * L2)**2)
    f3 = b3 * w3 * (1 + (alpha * L3)**2)
    X = X + f1 + np.cos(2 * np.pi / 3) * f2 + np.cos(4 * np.pi / 3) * f3
    Y = Y + np.sin(2 * np.pi / 3) * f2 + np.sin(4 * np.pi / 3) * f3
    return np.column_stack([X, Y])


def solution_points(k: int) -> np.ndarray:
    return warp_blend_nodes(k)

# }}}

# vim: foldmethod=marker
