import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trifr.operators import (
    OperatorError,
    build_modal_operators,
    nodal_operators,
    sbp_residual,
    symmetry_ops,
)
from trifr.polybasis import BasisSet, solution_points, vandermonde


@pytest.mark.parametrize("k", range(0, 7))
def test_sbp_modal(k):
    assert sbp_residual(build_modal_operators(k)) < 1e-11


@pytest.mark.parametrize("k", range(1, 7))
def test_sbp_nodal(k):
    ops = nodal_operators(build_modal_operators(k), solution_points(k))
    assert sbp_residual(ops) < 1e-11


def test_modal_mass_identity():
    ops = build_modal_operators(3)
    assert np.abs(ops.M - np.eye(10)).max() < 1e-13


def test_weights_positive_and_total_perimeter():
    ops = build_modal_operators(4)
    assert np.all(ops.weights > 0)
    assert ops.weights.sum() == pytest.approx(6.0, abs=1e-13)


def test_derivative_of_linear_function():
    # f = 2x - 3y + 1 differentiated in the nodal frame
    ops = nodal_operators(build_modal_operators(3), solution_points(3))
    p = ops.solution_points
    f = 2 * p[:, 0] - 3 * p[:, 1] + 1
    assert np.allclose(ops.Dx @ f, 2, atol=1e-12)
    assert np.allclose(ops.Dy @ f, -3, atol=1e-12)


def test_ones_annihilated():
    for frame in ("modal", "nodal"):
        ops = build_modal_operators(2)
        if frame == "nodal":
            ops = nodal_operators(ops, solution_points(2))
        assert np.abs(ops.G @ ops.ones()).max() < 1e-12


def test_order_out_of_range():
    with pytest.raises(OperatorError):
        build_modal_operators(7)


def test_wrong_point_count():
    with pytest.raises(OperatorError):
        nodal_operators(build_modal_operators(2), solution_points(3))


def test_degenerate_points():
    pts = np.zeros((6, 2))
    with pytest.raises(OperatorError):
        nodal_operators(build_modal_operators(2), pts)


@pytest.mark.parametrize("k", range(1, 5))
def test_symmetry_transfers(k):
    s = symmetry_ops(k)
    n = BasisSet(k).size
    I = np.eye(n)
    assert np.abs(np.linalg.matrix_power(s.T, 3) - I).max() < 1e-12
    assert np.abs(s.S @ s.S - I).max() < 1e-12
    assert np.abs(s.T.T @ s.T - I).max() < 1e-12


def test_rotation_transfer_oracle():
    # rotating the basis and evaluating must match T applied to coefficients
    from trifr.operators import rotation
    k = 3
    s = symmetry_ops(k)
    rng = np.random.default_rng(3)
    pts = np.array([[0.1, 0.05], [-0.3, -0.2], [0.0, 0.4]])
    c = rng.normal(size=BasisSet(k).size)
    R = rotation(2 * np.pi / 3)
    lhs = vandermonde(BasisSet(k), pts @ R.T) @ c
    rhs = vandermonde(BasisSet(k), pts) @ (s.T @ c)
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_sbp_frame_invariance(k, seed):
    # any well-conditioned interpolation set yields an SBP bundle
    rng = np.random.default_rng(seed)
    base = solution_points(k)
    pts = base + 0.02 * rng.normal(size=base.shape)
    try:
        ops = nodal_operators(build_modal_operators(k), pts)
    except OperatorError:
        return
    V = vandermonde(BasisSet(k), pts)
    if np.linalg.cond(V) > 1e6:
        return
    assert sbp_residual(ops) < 1e-11 * max(1.0, np.linalg.cond(V))
