"""
Correction (lifting) matrices
=============================

``C = (M + Q)^{-1} L^T W`` maps interface flux jumps at the flux points into
the solution space. Column ``j`` holds the coefficients of the divergence of
the correction field owned by flux point ``j``.

The quadrature pathway builds the same matrix through an intermediate point
set carrying a stronger quadrature, via an L2 projection pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from trifr.operators import OperatorSet
from trifr.polybasis import BasisSet, QuadratureRule, vandermonde, volume_quadrature
from trifr.qfamily import QMatrix, stability_verdict


class CorrectionStabilityError(ValueError):
    """Raised when ``M + Q`` is not positive definite."""


@dataclass(frozen=True)
class CorrectionMatrix:
    k: int
    C: np.ndarray
    frame: str
    Q: np.ndarray = field(repr=False)
    pathway: str = "exact"


def _q_in_frame(ops: OperatorSet, Q) -> np.ndarray:
    if Q is None:
        return np.zeros_like(ops.M)
    Q = Q.Q if isinstance(Q, QMatrix) else np.asarray(Q, dtype=float)
    if ops.frame == "nodal" and isinstance(Q, np.ndarray) and ops.V is not None:
        # Q families are given modally; congruence to the nodal frame
        Vinv = np.linalg.inv(ops.V)
        return Vinv.T @ Q @ Vinv
    return Q


def correction_matrix(ops: OperatorSet, Q=None) -> CorrectionMatrix:
    """Solve ``(M + Q) C = L^T W`` by Cholesky. *Q* is modal."""
    Qf = _q_in_frame(ops, Q)
    A = ops.M + Qf
    verdict = stability_verdict(Qf, ops)
    if verdict != "stable":
        raise CorrectionStabilityError(f"M + Q is not positive definite ({verdict})")
    C = cho_solve(cho_factor(A), ops.L.T @ ops.W)
    return CorrectionMatrix(ops.k, C, ops.frame, Qf)


def conservation_residual(ops: OperatorSet, Q=None) -> float:
    """Max-norm of ``1^T M C - 1^T L^T W``."""
    C = correction_matrix(ops, Q).C
    one = ops.ones()
    return float(np.abs(one @ ops.M @ C - one @ ops.L.T @ ops.W).max())


def _modal_column(ops, C, j):
    col = C[:, j]
    if ops.frame == "nodal":
        col = np.linalg.solve(ops.V, col)
    return col


def correction_field(ops: OperatorSet, C: CorrectionMatrix | np.ndarray,
                     flux_point: int, eval_points) -> np.ndarray:
    """Divergence of the correction field of *flux_point* at *eval_points*."""
    C = C.C if isinstance(C, CorrectionMatrix) else np.asarray(C)
    if not 0 <= flux_point < C.shape[1]:
        raise IndexError(f"flux point {flux_point} out of range 0..{C.shape[1] - 1}")
    coef = _modal_column(ops, C, flux_point)
    return vandermonde(BasisSet(ops.k), np.atleast_2d(eval_points)) @ coef


# {{{ projection pathway

@dataclass(frozen=True)
class ProjectionPair:
    q: int
    k: int
    P: np.ndarray
    R: np.ndarray
    Mq: np.ndarray
    rule: QuadratureRule = field(repr=False)
    V: np.ndarray = field(repr=False)


def l2_projection(k: int, q: int | None = None, rule: QuadratureRule | None = None,
                  solution_points=None) -> ProjectionPair:
    """Projection pair between the order-*k* space and the point set of a
    quadrature of strength at least ``2q - 1``.

    Without *solution_points* the order-*k* space is represented modally,
    otherwise by nodal values at those points.
    """
    q = k + 1 if q is None else q
    if q <= k:
        raise ValueError(f"need q > k, got q={q}, k={k}")
    rule = rule or volume_quadrature(2 * q - 1)
    if rule.strength < 2 * q - 1:
        raise ValueError(
            f"rule strength {rule.strength} below the required {2 * q - 1}")
    basis = BasisSet(k)
    if len(rule.points) <= basis.size:
        raise ValueError("quadrature must have more points than the solution space")

    Vq = vandermonde(basis, rule.points)
    if solution_points is None:
        V = np.eye(basis.size)
    else:
        V = vandermonde(basis, np.atleast_2d(solution_points))
    P = Vq @ np.linalg.inv(V)
    Mq = np.diag(rule.weights)
    R = np.linalg.solve(P.T @ Mq @ P, P.T @ Mq)
    return ProjectionPair(q, k, P, R, Mq, rule, V)


def weak_quadrature_correction(pair: ProjectionPair, Q, L: np.ndarray,
                               W: np.ndarray) -> CorrectionMatrix:
    """``C = R (M_q + Q_q)^{-1} R^T L^T W`` with ``Q_q = (V^{-1} R)^T Q V^{-1} R``."""
    n = pair.R.shape[0]
    if Q is None:
        Qt = np.zeros((n, n))
    else:
        Qt = Q.Q if isinstance(Q, QMatrix) else np.asarray(Q, dtype=float)
    VR = np.linalg.solve(pair.V, pair.R)
    A = pair.Mq + VR.T @ Qt @ VR
    try:
        fac = cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise CorrectionStabilityError("lifted quadrature matrix is not SPD") from exc
    C = pair.R @ cho_solve(fac, pair.R.T @ L.T @ W)
    frame = "modal" if np.array_equal(pair.V, np.eye(len(pair.V))) else "nodal"
    return CorrectionMatrix(pair.k, C, frame, Qt, pathway="quadrature")

# }}}

# vim: foldmethod=marker
