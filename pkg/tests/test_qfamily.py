from math import sqrt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trifr.operators import build_modal_operators, nodal_operators, symmetry_ops
from trifr.polybasis import BasisSet, solution_points
from trifr.qfamily import (
    CLOSED_FORM_LIMITS,
    QFamilyError,
    QParams,
    castonguay_base,
    castonguay_params,
    castonguay_q,
    closed_form_check,
    constraint_residual,
    is_stable,
    project_onto,
    q_matrix,
    q_nullspace,
    stability_limit,
    stability_limit_eig,
    stability_verdict,
)

OPS = {k: build_modal_operators(k) for k in range(1, 7)}
SYMS = {k: symmetry_ops(k) for k in range(1, 7)}


def test_k2_zero_is_zero():
    assert not q_matrix((0, 0), 2).Q.any()


def test_k2_ones_diagonal():
    Q = q_matrix((1, 1), 2).Q
    assert Q[2, 2] == 1 and Q[4, 4] == 1 and Q[5, 5] == 1
    assert Q[2, 5] == 0
    assert np.count_nonzero(Q) == 3


def test_k3_printed_entries():
    Q = q_matrix((0, 0, 1), 3).Q
    # coupling between the two y-symmetric cubic modes
    assert Q[6, 9] == 1 and Q[9, 6] == 1
    assert Q[6, 6] == pytest.approx(-sqrt(16 / 21))


def test_param_count_checked():
    with pytest.raises(QFamilyError):
        QParams(2, (1, 2, 3))
    with pytest.raises(QFamilyError):
        QParams(5, (1,))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_family_invariants(k):
    rng = np.random.default_rng(k)
    for _ in range(5):
        Q = q_matrix(tuple(rng.normal(size=k)), k).Q
        assert np.array_equal(Q, Q.T)
        assert constraint_residual(Q, OPS[k], SYMS[k]) < 1e-11
        low = BasisSet(k).degrees < k
        assert not Q[low].any() and not Q[:, low].any()


@pytest.mark.parametrize("k,dim", [(1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (6, 7)])
def test_nullspace_dimension(k, dim):
    assert len(q_nullspace(k, OPS[k], SYMS[k])) == dim


def test_nullspace_k1_span():
    (B,) = q_nullspace(1, OPS[1], SYMS[1])
    ref = np.diag([0.0, 1.0, 1.0]) / sqrt(2)
    assert np.abs(np.abs(B.Q) - ref).max() < 1e-12


@pytest.mark.parametrize("k", [2, 3, 4])
def test_family_in_nullspace(k):
    basis = q_nullspace(k, OPS[k], SYMS[k])
    rng = np.random.default_rng(10 + k)
    for _ in range(5):
        _, res = project_onto(basis, q_matrix(tuple(rng.normal(size=k)), k))
        assert res < 1e-10


def test_nullspace_orthonormal():
    basis = q_nullspace(4, OPS[4], SYMS[4])
    G = np.array([[np.sum(a.Q * b.Q) for b in basis] for a in basis])
    assert np.abs(G - np.eye(len(basis))).max() < 1e-12


def test_stability_examples():
    assert is_stable(QParams(2, (0, 0)), OPS[2])
    assert stability_verdict(q_matrix((0, -1), 2), OPS[2]) == "marginal"
    assert stability_verdict(q_matrix((0, -2), 2), OPS[2]) == "unstable"


@pytest.mark.parametrize("k", [2, 3, 4])
def test_closed_form_matches_cholesky(k):
    from trifr.qfamily import closed_form_conditions
    rng = np.random.default_rng(100 + k)
    checked = 0
    for _ in range(200):
        q = tuple(rng.uniform(-0.5, 2, size=k))
        p = QParams(k, q)
        conds = closed_form_conditions(p, printed=False)
        if min(abs(c) for c in conds) < 1e-10:
            continue
        assert closed_form_check(p, printed=False) == is_stable(p, OPS[k])
        checked += 1
    assert checked > 150


def test_k3_printed_third_condition_rejects_dg():
    from trifr.qfamily import closed_form_conditions
    p = QParams(3, (0, 0, 0))
    assert is_stable(p, OPS[3])
    assert not closed_form_check(p)
    assert closed_form_check(p, printed=False)
    assert closed_form_conditions(p)[2] == -closed_form_conditions(p, printed=False)[2]


def test_castonguay_zero():
    assert not castonguay_q(3, 0.0, OPS[3]).Q.any()


def test_castonguay_k2_entries():
    Q = castonguay_q(2, 1.0, OPS[2]).Q
    assert Q[4, 4] == pytest.approx(150, rel=1e-9)
    assert Q[5, 5] == pytest.approx(410 / 3, rel=1e-9)


@pytest.mark.parametrize("k", [2, 3])
def test_castonguay_matches_printed_substitution(k):
    c = 1e-4
    diff = castonguay_q(k, c, OPS[k]).Q - q_matrix(castonguay_params(k, c)).Q
    assert np.abs(diff).max() < 1e-9


def test_castonguay_k4_substitution_with_consistent_q1():
    # fitted family parameters of the assembled matrix
    B = castonguay_base(4, OPS[4])
    A = np.column_stack([q_matrix(tuple(e), 4).Q.ravel() for e in np.eye(4)])
    q, *_ = np.linalg.lstsq(A, B.ravel(), rcond=None)
    assert np.allclose(q, [-30240 * sqrt(21), 564480, 5040, -80640 * sqrt(5)], rtol=1e-9)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_stability_limit_closed_forms(k):
    c = stability_limit(k, OPS[k])
    assert c == pytest.approx(CLOSED_FORM_LIMITS[k], rel=1e-8)


def test_stability_limit_k6():
    assert stability_limit(6, OPS[6]) == pytest.approx(-2.88363e-11, rel=1e-2)


@pytest.mark.parametrize("k", range(1, 7))
def test_bisection_vs_eigen_oracle(k):
    assert stability_limit(k, OPS[k]) == pytest.approx(stability_limit_eig(k, OPS[k]), rel=1e-9)


@pytest.mark.parametrize("k", range(1, 6))
def test_limit_is_sharp(k):
    c = stability_limit_eig(k, OPS[k])
    assert stability_verdict(castonguay_q(k, c * (1 - 1e-8), OPS[k]), OPS[k]) == "stable"
    assert stability_verdict(castonguay_q(k, c * (1 + 1e-8), OPS[k]), OPS[k]) != "stable"


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.floats(0.0, 1.0))
def test_castonguay_containment(k, frac):
    # anywhere in the stable range, including small positive values
    c = frac * stability_limit_eig(k, OPS[k]) + (1 - frac) * 1e-3
    basis = q_nullspace(k, OPS[k], SYMS[k])
    Q = castonguay_q(k, c, OPS[k]).Q
    scale = max(1.0, np.abs(Q).max())
    _, res = project_onto(basis, Q)
    assert res / scale < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.9, 2.0), min_size=3, max_size=3))
def test_frame_invariance(q):
    k = 3
    Q = q_matrix(tuple(q), k).Q
    nod = nodal_operators(OPS[k], solution_points(k))
    Vinv = np.linalg.inv(nod.V)
    modal = stability_verdict(Q, OPS[k])
    nodal = stability_verdict(Vinv.T @ Q @ Vinv, nod)
    ev = np.linalg.eigvalsh(np.eye(10) + Q).min()
    if abs(ev) > 1e-8:
        assert modal == nodal
