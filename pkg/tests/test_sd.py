from math import sqrt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre as leg, polynomial as poly

from trifr.polybasis import BasisSet, REF, vandermonde, volume_quadrature
from trifr.sd import (
    FluxPointLayout,
    RTBasis,
    SDLayoutError,
    make_layout,
    q_slots,
    rt_vandermonde,
    sd1d_h,
    sd1d_root_search,
    sd1d_solve_q,
    sd_tri_correction,
    sd_tri_residual,
    sd_tri_search,
)


@pytest.mark.parametrize("k,z", [(2, [0.4]), (3, [0.6]), (4, [0.3, 0.8]), (5, [0.2, 0.7])])
def test_h_boundary_values(k, z):
    hl, hr = sd1d_h(k, z)
    assert poly.polyval(-1, hl) == pytest.approx(1)
    assert poly.polyval(1, hl) == pytest.approx(0, abs=1e-14)
    assert poly.polyval(1, hr) == pytest.approx(1)
    assert poly.polyval(-1, hr) == pytest.approx(0, abs=1e-14)
    # vanishing at the interior flux points
    for zi in z:
        for s in (-zi, zi):
            assert abs(poly.polyval(s, hr)) < 1e-14


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.floats(-1, 1), st.data())
def test_h_mirror_symmetry(k, x, data):
    z = sorted(data.draw(st.lists(st.floats(0.05, 0.95), min_size=k // 2,
                                  max_size=k // 2, unique=True)))
    if len(z) > 1 and z[1] - z[0] < 1e-3:
        return
    hl, hr = sd1d_h(k, z)
    assert poly.polyval(x, hl) == pytest.approx(poly.polyval(-x, hr), abs=1e-10)


def test_bad_parameters():
    with pytest.raises(ValueError):
        sd1d_h(3, [1.2])
    with pytest.raises(ValueError):
        sd1d_h(4, [0.5])


def test_slot_order():
    assert q_slots(3)[0] == (3, 3)
    assert q_slots(4)[0] == (4, 4)
    assert q_slots(4)[3] == (2, 2)


def test_k3_gauss_point():
    res = sd1d_solve_q(3, [sqrt(3 / 5)])
    assert res.in_family and res.stable
    assert res.q[0] == pytest.approx(3 / 14, abs=1e-12)


def test_k3_off_root_rejected():
    res = sd1d_solve_q(3, [0.5])
    assert not res.in_family
    assert max(res.solve_residual, res.constraint_residual) > 1e-3


def test_root_search_k3():
    (root,) = sd1d_root_search(3)
    assert root[0] == pytest.approx(sqrt(3 / 5), abs=1e-10)
    assert isinstance(root[0], float)


def test_root_search_k4_gauss():
    g, _ = leg.leggauss(4)
    (root,) = sd1d_root_search(4)
    assert np.allclose(root, np.sort(g[g > 0]), atol=1e-10)
    res = sd1d_solve_q(4, root)
    assert res.q[0] == pytest.approx(8 / 45, abs=1e-10)


def test_root_search_k2():
    (root,) = sd1d_root_search(2)
    assert root[0] == pytest.approx(1 / sqrt(3), abs=1e-10)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_rt_dimension(k):
    rt = RTBasis(k)
    assert rt.size == (k + 1) * (k + 3)
    rule = volume_quadrature(2 * k + 3)
    X, Y = rt.eval(rule.points)
    # linear independence of the sampled vector fields
    assert np.linalg.matrix_rank(np.vstack([X, Y]), tol=1e-10) == rt.size


@pytest.mark.parametrize("k", [1, 2, 3])
def test_rt_divergence_in_pk(k):
    rt = RTBasis(k)
    rule = volume_quadrature(2 * k + 2)
    div = rt.div(rule.points)
    V = vandermonde(BasisSet(k), rule.points)
    coef = (V.T * rule.weights) @ div
    assert np.abs(V @ coef - div).max() < 1e-11


def test_rt_divergence_finite_difference():
    rt = RTBasis(2)
    p = np.array([[0.1, -0.2]])
    h = 1e-6
    Xp, _ = rt.eval(p + [h, 0])
    Xm, _ = rt.eval(p - [h, 0])
    _, Yp = rt.eval(p + [0, h])
    _, Ym = rt.eval(p - [0, h])
    fd = (Xp - Xm + Yp - Ym) / (2 * h)
    assert np.abs(fd - rt.div(p)).max() < 1e-6


@pytest.mark.parametrize("k", [1, 2])
def test_normal_trace_is_pk_on_edges(k):
    # the normal trace of every RT_k field is a degree-k polynomial per edge
    rt = RTBasis(k)
    t = np.linspace(-1, 1, k + 4)
    for (a, b), n in zip(REF.edges, REF.normals):
        pts = a + np.outer((t + 1) / 2, b - a)
        X, Y = rt.eval(pts)
        nt = X * n[0] + Y * n[1]
        fit = leg.legfit(t, nt, k)
        assert np.abs(leg.legval(t, fit).T - nt).max() < 1e-11


def test_layout_k1_centroid():
    lay = make_layout(1, "centroid")
    assert len(lay.points) == 8
    rt_vandermonde(RTBasis(1), lay)


def test_layout_k2_collocated():
    lay = make_layout(2, "collocated", (5 / 12,))
    assert len(lay.points) == 15
    rt_vandermonde(RTBasis(2), lay)


def test_parallel_normals_rejected():
    lay = make_layout(1, "centroid")
    nrm = np.array([[1.0, 0.0], [1.0, 0.0]])
    bad = FluxPointLayout(1, lay.edge_params, lay.interior_points, nrm)
    with pytest.raises(SDLayoutError):
        rt_vandermonde(RTBasis(1), bad)


def test_wrong_point_count():
    with pytest.raises(SDLayoutError):
        FluxPointLayout(1, np.array([0.0]), np.zeros((2, 2)), np.eye(2))


def test_interior_point_on_edge_rejected():
    with pytest.raises(SDLayoutError):
        make_layout(2, "collocated", (0.0,))


def test_dg_lifting_integrates_edges():
    # column sums of the lifted constant mode give the edge quadrature weights
    lay = make_layout(2, "collocated", (5 / 12,))
    Csd, Cdg = sd_tri_correction(lay)
    ell = np.linalg.inv(leg.legvander(lay.edge_params, 2))
    per_edge = 2 * ell[0] * 3 ** -0.25
    assert np.allclose(Cdg[0], np.tile(per_edge, 3), atol=1e-13)
    # divergence theorem for the SD correction
    assert np.allclose(Csd[0], Cdg[0], atol=1e-12)


def test_k1_recovers_dg_family():
    rep = sd_tri_residual(make_layout(1, "centroid"))
    assert rep.recovered
    assert rep.q[0] == pytest.approx(1 / 3, abs=1e-12)


def test_k2_no_solution():
    grid = [(z,) for z in np.linspace(0.05, 0.45, 9)]
    rep = sd_tri_search(2, "collocated", grid)
    assert rep.verdict.startswith("NO SOLUTION")
    assert rep.best[1] > 0.1


def test_k2_constant_row_vanishes():
    rep = sd_tri_residual(make_layout(2, "collocated", (5 / 12,)))
    assert np.abs(rep.A[0]).max() < 1e-12


def test_k3_six_point_doubling_singular():
    with pytest.raises(SDLayoutError):
        rt_vandermonde(RTBasis(3), make_layout(3, "001", (0.1, 0.2)))
