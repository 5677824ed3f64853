"""
Norm-modification matrices
==========================

Symmetric matrices :math:`\\tilde{Q}` that extend the range of energy-stable
correction operators on triangles. The explicit families for ``k = 1..4`` are
given by :func:`q_matrix`; :func:`q_nullspace` recovers the same spaces from the
linear constraints alone. :func:`castonguay_q` builds the single-parameter
subfamily from powers of the modal differentiation operators, and
:func:`stability_limit` locates the smallest stable parameter of that
subfamily.

All matrices live in the modal frame, where ``M = I``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, sqrt

import numpy as np

from trifr.operators import OperatorSet, SymmetryOps, build_modal_operators, symmetry_ops
from trifr.polybasis import mode_count

FAMILY_SIZE = {1: 1, 2: 2, 3: 3, 4: 4}
PIVOT_TOL = 1e-13
RANK_TOL = 1e-10


class QFamilyError(ValueError):
    pass


@dataclass(frozen=True)
class QParams:
    k: int
    q: tuple

    def __post_init__(self):
        if self.k not in FAMILY_SIZE:
            raise QFamilyError(f"no explicit family for k={self.k} (expected 1..4)")
        q = tuple(float(v) for v in self.q)
        if len(q) != FAMILY_SIZE[self.k]:
            raise QFamilyError(
                f"k={self.k} takes {FAMILY_SIZE[self.k]} parameters, got {len(q)}")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class QMatrix:
    k: int
    Q: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.Q if dtype is None else self.Q.astype(dtype)


def _as_array(Q) -> np.ndarray:
    return Q.Q if isinstance(Q, QMatrix) else np.asarray(Q, dtype=float)


# {{{ explicit families

def _theta(q0, q1, q2, q3):
    r5, r21 = sqrt(5), sqrt(21)
    return (
        (16 * r21 * q0 + 98 * q1 + 99 * q2 - 9 * r5 * q3) / 98,
        (8 * r21 * q0 + 42 * q1 + 75 * q2 - 45 * r5 * q3) / 42,
        (5 * sqrt(105) * q0 + 20 * r5 * q2 - 18 * q3) / 49,
        (4 * r21 * q0 + 147 * q1 + 240 * q2 - 102 * r5 * q3) / 147,
        (2 * r21 * q0 + 6 * q1 + 12 * q2 - 3 * r5 * q3) / 6,
    )


def _family_entries(k, q):
    """(row, col, value) of the upper triangle, indices relative to the first
    degree-k mode minus ``k`` (the offset of the printed blocks)."""
    if k == 1:
        return [(1, 1, q[0]), (2, 2, q[0])], 0
    if k == 2:
        q0, q1 = q
        return [(2, 2, (5 * q0 - q1) / 4), (4, 4, q1), (5, 5, q0),
                (2, 5, (q0 - q1) * sqrt(5 / 4))], 0
    if k == 3:
        q0, q1, q2 = q
        return [(0, 0, (q1 + 4 * q0) / 5 + q2 * sqrt(48 / 175)),
                (0, 5, (q0 - q1) / sqrt(5) + q2 * sqrt(3 / 35)),
                (3, 3, q0 - q2 * sqrt(16 / 21)), (3, 6, q2),
                (5, 5, q1), (6, 6, q0)], 3
    q0, q1, q2, q3 = q
    t0, t1, t2, t3, t4 = _theta(q0, q1, q2, q3)
    return [(0, 0, t4), (0, 7, q3), (0, 10, q2), (4, 4, q1), (4, 9, q0),
            (7, 7, t3), (7, 10, t2), (9, 9, t1), (10, 10, t0)], 4


def q_matrix(params: QParams | tuple, k: int | None = None) -> QMatrix:
    """Closed-form family member in the canonical (v-major) mode ordering.

    Either ``q_matrix(QParams(k, q))`` or ``q_matrix(q, k)``.
    """
    if not isinstance(params, QParams):
        params = QParams(k, tuple(params))
    k = params.k
    entries, off = _family_entries(k, params.q)
    Q = np.zeros((mode_count(k), mode_count(k)))
    for i, j, v in entries:
        Q[off + i, off + j] = v
        Q[off + j, off + i] = v
    return QMatrix(k, Q)

# }}}


# {{{ constraint nullspace

def _sym_basis(n):
    # Frobenius-orthonormal basis of symmetric n x n matrices
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1 / sqrt(2)
            out.append(E)
    return out


def constraint_residual(Q, ops: OperatorSet, syms: SymmetryOps | None = None) -> float:
    """Largest violation of the skew and symmetry-commutation conditions."""
    Q = _as_array(Q)
    res = [np.abs(Q - Q.T).max(),
           np.abs(Q @ ops.Dx + ops.Dx.T @ Q).max(),
           np.abs(Q @ ops.Dy + ops.Dy.T @ Q).max()]
    if syms is not None:
        res += [np.abs(syms.T @ Q - Q @ syms.T).max(),
                np.abs(syms.S @ Q - Q @ syms.S).max()]
    return float(max(res))


def q_nullspace(k: int, ops: OperatorSet | None = None,
                syms: SymmetryOps | None = None) -> list[QMatrix]:
    """Frobenius-orthonormal basis of all admissible Q for order *k*."""
    ops = ops or build_modal_operators(k)
    syms = syms or symmetry_ops(k)
    if ops.frame != "modal":
        raise QFamilyError("q_nullspace expects modal operators")

    basis = _sym_basis(ops.n_modes)
    cols = []
    for E in basis:
        cols.append(np.concatenate([
            (E @ ops.Dx + ops.Dx.T @ E).ravel(),
            (E @ ops.Dy + ops.Dy.T @ E).ravel(),
            (syms.T @ E - E @ syms.T).ravel(),
            (syms.S @ E - E @ syms.S).ravel()]))
    A = np.column_stack(cols)
    _, s, vt = np.linalg.svd(A)
    s_full = np.zeros(A.shape[1])
    s_full[:len(s)] = s
    cut = RANK_TOL * s[0]
    # a singular value within three decades of the cut makes the rank ambiguous
    if np.any((s_full > cut * 1e-3) & (s_full < cut * 1e3)):
        raise QFamilyError("rank-ambiguous constraint system")
    null = vt[s_full <= cut]

    out = []
    for v in null:
        Q = sum(c * E for c, E in zip(v, basis))
        out.append(QMatrix(k, Q))
    return out


def project_onto(basis: list[QMatrix], Q) -> tuple[np.ndarray, float]:
    """Coefficients of *Q* in an orthonormal *basis* and the residual norm."""
    Q = _as_array(Q)
    B = np.column_stack([_as_array(b).ravel() for b in basis])
    coef, *_ = np.linalg.lstsq(B, Q.ravel(), rcond=None)
    return coef, float(np.linalg.norm(B @ coef - Q.ravel()))

# }}}


# {{{ stability

def cholesky_pivots(A: np.ndarray) -> np.ndarray:
    """Pivots of an unpivoted Cholesky sweep; stops at the first non-positive
    pivot, whose value is returned last."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    L = np.zeros_like(A)
    piv = []
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        piv.append(d)
        if d <= PIVOT_TOL:
            break
        L[j, j] = sqrt(d)
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return np.array(piv)


def stability_verdict(Q, ops: OperatorSet | None = None) -> str:
    """``"stable"``, ``"marginal"`` or ``"unstable"`` for ``M + Q``."""
    Q = _as_array(Q)
    M = ops.M if ops is not None else np.eye(Q.shape[0])
    piv = cholesky_pivots(M + Q)
    last = piv[-1]
    if last > PIVOT_TOL:
        return "stable"
    if last > -PIVOT_TOL:
        return "marginal"
    return "unstable"


def is_stable(params: QParams | QMatrix | np.ndarray,
              ops: OperatorSet | None = None) -> bool:
    if isinstance(params, QParams):
        params = q_matrix(params)
    return stability_verdict(params, ops) == "stable"


def closed_form_conditions(params: QParams, printed: bool = True) -> list[float]:
    """Left-hand sides minus right-hand sides of the closed-form inequalities;
    every entry must be positive for stability.

    For k=3 the printed third inequality is the negated Cholesky pivot
    condition (it rejects q = 0); ``printed=False`` flips it.
    """
    k, q = params.k, params.q
    if k == 1:
        return [q[0] + 1]
    if k == 2:
        q0, q1 = q
        return [q1 + 1, 9 * q0 - 5 * q1 + 4]
    r21 = sqrt(21)
    if k == 3:
        q0, q1, q2 = q
        a = 7 * q0 + r21 * q2 + 7
        return [28 * q0 + 7 * q1 + 4 * r21 * q2 + 35,
                21 * q0 - 4 * r21 * q2 + 21,
                (1 if printed else -1) * a * (7 * q0 - 42 * q1 + r21 * q2 - 35),
                a * (3 * q0 - r21 * q2 + 3)]
    q0, q1, q2, q3 = q
    t0, t1, t2, t3, t4 = _theta(q0, q1, q2, q3)
    return [t4 + 1, q1 + 1,
            -q3**2 + t3 + t4 + t3 * t4 + 1,
            -q0**2 + q1 + t1 + q1 * t1 + 1,
            2 * t2 * q2 * q3 + t3 * (t4 - q2**2 + 1)
            + t0 * ((t3 + 1) * (t4 + 1) - q3**2)
            - (t4 + 1) * t2**2 + t4 - q2**2 - q3**2 + 1]


def closed_form_check(params: QParams, printed: bool = True) -> bool:
    return all(c > 0 for c in closed_form_conditions(params, printed))

# }}}


# {{{ single-parameter subfamily

CASTONGUAY_SUBSTITUTION = {
    2: lambda c: (410 * c / 3, 150 * c),
    3: lambda c: (6384 * c, 27440 * c / 3, -168 * sqrt(21) * c),
    4: lambda c: (-30240 * sqrt(21) * c, 564480 * c, 5040 * c, -80640 * sqrt(5) * c),
}

CLOSED_FORM_LIMITS = {
    1: -1 / 6,
    2: -1 / 150,
    3: -1 / 9800,
    4: -(115 - sqrt(1129)) / 76204800,
    5: -(67 - sqrt(889)) / 5488560000,
}
TABLE_K6 = -2.88363e-11

# both printed forms of the k=4 limit
K4_PRINTED_FORMS = {
    "(sqrt(1129) - 115)/76204800": (sqrt(1129) - 115) / 76204800,
    "-(115 - sqrt(1129))/76204800": -(115 - sqrt(1129)) / 76204800,
}


def castonguay_base(k: int, ops: OperatorSet | None = None) -> np.ndarray:
    """``sum_m binom(k, m-1) K_m^T M K_m`` with ``K_m = Dx^(k-m+1) Dy^(m-1)``."""
    ops = ops or build_modal_operators(k)
    mp = np.linalg.matrix_power
    B = np.zeros_like(ops.M)
    for m in range(1, k + 2):
        K = mp(ops.Dx, k - m + 1) @ mp(ops.Dy, m - 1)
        B += comb(k, m - 1) * K.T @ ops.M @ K
    return 0.5 * (B + B.T)


def castonguay_q(k: int, c: float, ops: OperatorSet | None = None) -> QMatrix:
    # no 1/area factor: with it every printed substitution is off by sqrt(3)
    return QMatrix(k, c * castonguay_base(k, ops))


def castonguay_params(k: int, c: float) -> QParams:
    if k == 1:
        return QParams(1, (castonguay_base(1)[1, 1] * c,))
    return QParams(k, CASTONGUAY_SUBSTITUTION[k](c))


def stability_limit(k: int, ops: OperatorSet | None = None, rtol: float = 1e-10,
                    bracket=(-1.0, 0.0)) -> float:
    """Smallest c for which ``M + Q_C(c)`` is positive definite, by bisection
    on the Cholesky verdict."""
    ops = ops or build_modal_operators(k)
    B = castonguay_base(k, ops)
    ok = lambda c: stability_verdict(c * B, ops) == "stable"

    lo, hi = bracket
    if ok(lo) or not ok(hi):
        raise QFamilyError(f"bracket {bracket} does not straddle the limit for k={k}")
    # halve towards zero first so tiny limits reach the relative tolerance
    while not ok(lo / 2):
        lo /= 2
    hi = lo / 2
    while abs(hi - lo) > rtol * abs(lo):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def stability_limit_eig(k: int, ops: OperatorSet | None = None) -> float:
    """Eigenvalue route: ``M = I`` so the limit is ``-1/lambda_max(B)``."""
    ops = ops or build_modal_operators(k)
    B = castonguay_base(k, ops)
    Mi = np.linalg.cholesky(ops.M)
    Li = np.linalg.inv(Mi)
    return -1.0 / np.linalg.eigvalsh(Li @ B @ Li.T).max()

# }}}

# vim: foldmethod=marker
