import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from trifr.correction import (
    CorrectionStabilityError,
    conservation_residual,
    correction_field,
    correction_matrix,
    l2_projection,
    weak_quadrature_correction,
)
from trifr.operators import build_modal_operators, nodal_operators
from trifr.polybasis import BasisSet, solution_points, vandermonde, volume_quadrature
from trifr.qfamily import q_matrix

OPS = {k: build_modal_operators(k) for k in range(1, 5)}
NODAL = {k: nodal_operators(OPS[k], solution_points(k)) for k in range(1, 5)}


def test_dg_lifting_modal():
    ops = OPS[3]
    C = correction_matrix(ops).C
    assert np.abs(C - ops.L.T @ ops.W).max() < 1e-13


@pytest.mark.parametrize("frame", ["modal", "nodal"])
def test_lifting_identity(frame):
    ops = OPS[3] if frame == "modal" else NODAL[3]
    cm = correction_matrix(ops, q_matrix((0.1, 0.1, 0.01), 3))
    assert np.abs((ops.M + cm.Q) @ cm.C - ops.L.T @ ops.W).max() < 1e-11


def test_unstable_q_rejected():
    with pytest.raises(CorrectionStabilityError):
        correction_matrix(OPS[2], q_matrix((-1, -1), 2))


def test_conservation_dg():
    assert conservation_residual(OPS[2]) < 1e-13
    assert conservation_residual(NODAL[2]) < 1e-13


def test_conservation_family_member():
    assert conservation_residual(OPS[2], q_matrix((0.3, 0.7), 2)) < 1e-11


def test_conservation_negative_control():
    Q = q_matrix((0.3, 0.7), 2).Q.copy()
    Q[0, 4] = Q[4, 0] = 0.2
    assert conservation_residual(OPS[2], Q) > 1e-3


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_conservation_random_family(k):
    rng = np.random.default_rng(k)
    for _ in range(5):
        q = tuple(rng.uniform(0, 0.5, size=k))
        assert conservation_residual(OPS[k], q_matrix(q, k)) < 1e-11
        assert conservation_residual(NODAL[k], q_matrix(q, k)) < 1e-11


def test_field_integral_is_weight():
    ops = OPS[3]
    cm = correction_matrix(ops, q_matrix((1, 1, 1), 3))
    rule = volume_quadrature(6)
    for j in range(ops.n_flux):
        val = rule.integrate(correction_field(ops, cm, j, rule.points))
        assert val == pytest.approx(ops.weights[j], abs=1e-12)


def test_field_two_paths():
    # modal evaluation versus the nodal frame at the same points
    k = 3
    Q = q_matrix((1, 1, 1), k)
    cm = correction_matrix(OPS[k], Q)
    cn = correction_matrix(NODAL[k], Q)
    pts = np.array([[0.86114, -0.57735], [0.1, 0.2], [-0.4, -0.3]])
    a = correction_field(OPS[k], cm, 1, pts)
    b = correction_field(NODAL[k], cn, 1, pts)
    assert np.abs(a - b).max() < 1e-10
    # value at the solution points equals the nodal column
    s = NODAL[k].solution_points
    assert np.abs(correction_field(OPS[k], cm, 1, s) - cn.C[:, 1]).max() < 1e-10


def test_field_zero_column_and_range():
    ops = OPS[2]
    Z = np.zeros((6, ops.n_flux))
    assert not correction_field(ops, Z, 0, np.zeros((3, 2))).any()
    with pytest.raises(IndexError):
        correction_field(ops, Z, ops.n_flux, np.zeros((1, 2)))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_projection_pair(k):
    pair = l2_projection(k)
    assert np.abs(pair.R @ pair.P - np.eye(BasisSet(k).size)).max() < 1e-11


def test_projection_recovers_polynomial():
    k = 2
    pair = l2_projection(k, solution_points=solution_points(k))
    s = solution_points(k)
    f = lambda p: 1 + p[:, 0] - 2 * p[:, 0] * p[:, 1] + p[:, 1] ** 2
    assert np.abs(pair.R @ f(pair.rule.points) - f(s)).max() < 1e-11


def test_projection_of_higher_mode():
    k = 2
    pair = l2_projection(k, q=4)
    rule = pair.rule
    hi = vandermonde(BasisSet(3), rule.points)[:, 7]
    low = vandermonde(BasisSet(k), rule.points)
    gram = (low.T * rule.weights) @ hi
    assert np.abs(pair.R @ hi - gram).max() < 1e-12


def test_projection_insufficient_rule():
    with pytest.raises(ValueError):
        l2_projection(2, q=3, rule=volume_quadrature(3))


@pytest.mark.parametrize("k,q", [(2, (0.3, 0.7)), (3, (0.1, 0.1, 0.01))])
def test_weak_pathway(k, q):
    Q = q_matrix(q, k)
    exact = correction_matrix(OPS[k], Q).C
    pair = l2_projection(k, q=k + 1)
    weak = weak_quadrature_correction(pair, Q, OPS[k].L, OPS[k].W).C
    assert np.abs(exact - weak).max() < 1e-10


def test_weak_pathway_dg():
    pair = l2_projection(2)
    C = weak_quadrature_correction(pair, None, OPS[2].L, OPS[2].W).C
    assert np.abs(C - OPS[2].L.T @ OPS[2].W).max() < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_weak_pathway_nodal(a, b):
    k = 2
    Q = q_matrix((a, b), k)
    # only members with M + Q safely positive definite
    assume(np.linalg.eigvalsh(np.eye(6) + Q.Q).min() > 1e-6)
    pair = l2_projection(k, solution_points=solution_points(k))
    weak = weak_quadrature_correction(pair, Q, NODAL[k].L, NODAL[k].W).C
    exact = correction_matrix(NODAL[k], Q).C
    assert np.abs(exact - weak).max() < 1e-10
