import json

import numpy as np
import pytest

from opsym import cpmaps as cp
from opsym import matcore as mc
from opsym import opspace as osp
from opsym import trilinear as tl
from opsym.errors import NotHermitian, NotPositive, ShapeMismatch


def planted_form(rng, E, S, K=3, r=2, m=2):
    phi = cp.sample_cc_map(E, (K, r), m, rng)
    psi = cp.sample_ucp(S, K, 2, rng).as_linmap()
    return tl.form_from_pair(E, S, phi.images, psi.images), phi


def test_amplify_level_one_is_pointwise():
    rng = np.random.default_rng(0)
    M2 = osp.full_algebra(2)
    theta = tl.multiplication_form(M2)
    y, s, x = (mc.random_complex(rng, 2, 2) for _ in range(3))
    assert np.allclose(tl.amplify(theta, y, s, x), theta(y, s, x))
    assert np.allclose(theta(y, s, x), mc.adjoint(y) @ s @ x)


def test_amplify_multiplication_form_is_matrix_product():
    rng = np.random.default_rng(1)
    M2 = osp.full_algebra(2)
    theta = tl.multiplication_form(M2)
    Y = M2.random_element(rng, 2, 3)
    S = M2.random_element(rng, 2, 2)
    X = M2.random_element(rng, 2, 3)
    out = tl.amplify(theta, Y, S, X)
    assert np.allclose(out, mc.adjoint(Y.concrete) @ S.concrete @ X.concrete)


def test_amplify_zero_and_shape_errors():
    M2 = osp.full_algebra(2)
    z = tl.zero_form(M2, M2, 2)
    rng = np.random.default_rng(2)
    X = M2.random_element(rng, 2, 2)
    assert not np.any(tl.amplify(z, X, M2.random_element(rng, 2, 2), X))
    with pytest.raises(ShapeMismatch):
        tl.amplify(z, X, M2.random_element(rng, 3, 3), X)


def test_polarisation_identity():
    rng = np.random.default_rng(3)
    M2 = osp.full_algebra(2)
    theta = tl.multiplication_form(M2)
    H = mc.random_hermitian(rng, 2)
    v1, v2 = mc.random_complex(rng, 2, 2), mc.random_complex(rng, 2, 2)
    pol = tl.polarise(theta, H, v1, v2)
    assert np.allclose(pol.combine(), theta(v1, H, v2), atol=1e-12)
    # diagonal case and zero middle
    diag = tl.polarise(theta, H, v1, v1)
    assert np.allclose(diag.combine(), theta(v1, H, v1))
    zero = tl.polarise(theta, np.zeros((2, 2)), v1, v2)
    assert all(not np.any(t) for t in zero.terms)
    with pytest.raises(NotHermitian):
        tl.polarise(theta, np.array([[0, 1], [0, 0]]), v1, v2)


def test_positive_forms_satisfy_adjoint_law():
    rng = np.random.default_rng(4)
    theta, _ = planted_form(rng, osp.full_algebra(2), osp.full_algebra(2))
    assert theta.adjoint_defect() <= 1e-10
    assert tl.is_completely_positive_form(theta)[0]
    assert tl.sample_positivity(theta, samples=30) >= -1e-9


def test_gns_multiplication_form():
    M2 = osp.full_algebra(2)
    fac = tl.gns_factorise(tl.multiplication_form(M2))
    assert fac.residual() <= 1e-8
    assert fac.unit_defect() <= 1e-10
    assert fac.psi_min_choi_eig() >= -1e-9
    ucp = fac.stinespring()
    assert np.allclose(ucp.as_linmap().images, fac.psi.images, atol=1e-10)


def test_gns_planted_form_and_cb_identity():
    rng = np.random.default_rng(5)
    E = osp.rect_space(2, 2)
    theta, _ = planted_form(rng, E, osp.full_algebra(2))
    fac = tl.gns_factorise(theta)
    assert fac.residual() <= 1e-8
    assert fac.unit_defect() <= 1e-10
    ti = tl.cb_interval(theta, restarts=4)
    phi_cb = cp.cb_norm(fac.phi, restarts=4)
    assert phi_cb.upper_certified
    # ||theta||_cb = ||phi||_cb^2: the ascent value cannot exceed the certified upper end
    assert ti.lower <= phi_cb.upper ** 2 + 1e-9
    assert abs(ti.lower - phi_cb.lower ** 2) <= 1e-4


def test_gns_operator_system_middle_space():
    rng = np.random.default_rng(6)
    theta, _ = planted_form(rng, osp.row_space(2), osp.diagonal_space(2), K=2, r=2)
    fac = tl.gns_factorise(theta)
    assert fac.residual() <= 1e-8
    assert fac.psi_min_choi_eig() >= -1e-7


def test_gns_zero_form_is_degenerate():
    M2 = osp.full_algebra(2)
    fac = tl.gns_factorise(tl.zero_form(M2, M2, 2))
    assert fac.K_dim == 0
    assert fac.residual() == 0.0


def test_gns_rejects_non_positive():
    M2 = osp.full_algebra(2)
    with pytest.raises(NotPositive):
        tl.gns_factorise(tl.multiplication_form(M2).scale(-1))


def test_balanced_intertwining_flag():
    # theta(y*, s, x) = y* s x on E = S = M_2 is balanced over A = M_2
    M2 = osp.full_algebra(2)
    fac = tl.gns_factorise(tl.multiplication_form(M2))
    assert fac.check_balanced(M2) <= 1e-10


def test_cc_decompose_unitary_twist():
    rng = np.random.default_rng(7)
    M2 = osp.full_algebra(2)
    u = mc.random_unitary(rng, 2)
    theta = tl.form_from_callable(M2, M2, lambda y, s, x: mc.adjoint(y) @ s @ u @ x)
    dec = tl.cc_decompose(theta)
    assert np.max(np.abs(dec.reconstruct().tensor - theta.tensor)) <= 1e-8
    for part in dec.parts:
        assert tl.is_completely_positive_form(part)[0]


def test_cc_decompose_positive_and_zero():
    M2 = osp.full_algebra(2)
    theta = tl.multiplication_form(M2)
    dec = tl.cc_decompose(theta)
    assert np.max(np.abs(dec.reconstruct().tensor - theta.tensor)) <= 1e-8
    dec0 = tl.cc_decompose(tl.zero_form(M2, M2, 2))
    assert all(not np.any(p.tensor) for p in dec0.parts)


def test_form_json_round_trip():
    rng = np.random.default_rng(8)
    theta, _ = planted_form(rng, osp.row_space(2), osp.full_algebra(2))
    back = tl.form_from_json(json.loads(json.dumps(theta.to_json())))
    assert np.array_equal(back.tensor, theta.tensor)
