"""
Summation-by-parts operator bundles
===================================

An :class:`OperatorSet` collects the mass, differentiation, boundary
interpolation, surface weight and normal operators of one polynomial order,
in either the modal (Dubiner) or a nodal frame. The bundle satisfies

.. math::

    M D + G^T \\hat{M} = L^T W N \\hat{L},

with :math:`\\hat{A} = I_2 \\otimes A`.

Flux points are ordered edge-major, counterclockwise from the bottom edge,
ascending along each edge's counterclockwise direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from trifr.polybasis import (
    REF,
    BasisSet,
    edge_flux_points,
    grad_vandermonde,
    vandermonde,
    volume_quadrature,
)

MAX_ORDER = 6


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorSet:
    k: int
    frame: str
    M: np.ndarray
    Dx: np.ndarray
    Dy: np.ndarray
    L: np.ndarray
    W: np.ndarray
    N: np.ndarray
    flux_points: np.ndarray
    normals: np.ndarray
    V: np.ndarray | None = field(default=None, repr=False)
    solution_points: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_modes(self) -> int:
        return self.M.shape[0]

    @property
    def n_flux(self) -> int:
        return self.L.shape[0]

    @property
    def G(self) -> np.ndarray:
        return np.vstack([self.Dx, self.Dy])

    @property
    def D(self) -> np.ndarray:
        return np.hstack([self.Dx, self.Dy])

    @property
    def weights(self) -> np.ndarray:
        return np.diag(self.W).copy()

    def ones(self) -> np.ndarray:
        """Coefficients of the constant function 1 in this frame."""
        if self.frame == "nodal":
            return np.ones(self.n_modes)
        e = np.zeros(self.n_modes)
        e[0] = 3.0**0.25
        return e


def _kron2(A):
    return np.kron(np.eye(2), A)


def _boundary(k, edge_params=None):
    rules = edge_flux_points(k, edge_params)
    pts = np.vstack([r.points for r in rules])
    w = np.concatenate([r.weights for r in rules])
    nrm = np.repeat(REF.normals, [len(r) for r in rules], axis=0)
    return pts, w, nrm


def build_modal_operators(k: int, edge_params=None) -> OperatorSet:
    """Modal bundle of order *k* with ``M = I`` and exact projections."""
    if not 0 <= k <= MAX_ORDER:
        raise OperatorError(f"unsupported order {k} (expected 0..{MAX_ORDER})")

    basis = BasisSet(k)
    rule = volume_quadrature(2 * k)
    V = vandermonde(basis, rule.points)
    Vx, Vy = grad_vandermonde(basis, rule.points)
    VtW = V.T * rule.weights

    pts, w, nrm = _boundary(k, edge_params)
    L = vandermonde(basis, pts)
    return OperatorSet(
        k=k, frame="modal",
        M=VtW @ V, Dx=VtW @ Vx, Dy=VtW @ Vy,
        L=L, W=np.diag(w),
        N=np.hstack([np.diag(nrm[:, 0]), np.diag(nrm[:, 1])]),
        flux_points=pts, normals=nrm)


def nodal_operators(modal: OperatorSet, solution_points) -> OperatorSet:
    """Transform a modal bundle to the nodal frame of *solution_points*."""
    pts = np.atleast_2d(solution_points)
    if pts.shape[0] != modal.n_modes:
        raise OperatorError(
            f"need {modal.n_modes} solution points, got {pts.shape[0]}")
    V = vandermonde(BasisSet(modal.k), pts)
    if np.linalg.cond(V) > 1e12:
        raise OperatorError("solution point set is not unisolvent")
    Vinv = np.linalg.inv(V)

    return replace(
        modal, frame="nodal",
        M=Vinv.T @ modal.M @ Vinv,
        Dx=V @ modal.Dx @ Vinv,
        Dy=V @ modal.Dy @ Vinv,
        L=modal.L @ Vinv,
        V=V, solution_points=pts)


def sbp_residual(ops: OperatorSet) -> float:
    """Max-norm of ``M D + G^T M^ - L^T W N L^``."""
    n, nf = ops.n_modes, ops.n_flux
    if ops.Dx.shape != (n, n) or ops.L.shape[1] != n or ops.N.shape != (nf, 2 * nf):
        raise OperatorError("inconsistent operator dimensions")
    lhs = ops.M @ ops.D + ops.G.T @ _kron2(ops.M)
    rhs = ops.L.T @ ops.W @ ops.N @ _kron2(ops.L)
    return float(np.abs(lhs - rhs).max())


# {{{ symmetry transfer matrices

@dataclass(frozen=True)
class SymmetryOps:
    k: int
    T: np.ndarray
    S: np.ndarray


def _transfer(k, transform):
    basis = BasisSet(k)
    rule = volume_quadrature(2 * k)
    V = vandermonde(basis, rule.points)
    Vt = vandermonde(basis, transform(rule.points))
    return (V.T * rule.weights) @ Vt


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def symmetry_ops(k: int) -> SymmetryOps:
    """Modal transfer matrices for the 120 degree rotation and the reflection
    ``x -> -x``, by projection of the transformed basis."""
    if not 1 <= k <= MAX_ORDER:
        raise OperatorError(f"unsupported order {k}")
    R = rotation(2 * np.pi / 3)
    T = _transfer(k, lambda p: p @ R.T)
    S = _transfer(k, lambda p: p * np.array([-1.0, 1.0]))
    return SymmetryOps(k, T, S)

# }}}

# vim: foldmethod=marker
