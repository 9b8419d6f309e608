import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opsym import matcore as mc
from opsym import opspace as osp
from opsym import symnorm as sn
from opsym.errors import PreconditionError, WitnessUnavailable

M2 = osp.full_algebra(2)
C = osp.scalars()


def gamma_oracle(t, grid=400):
    """sup over unit xi, eta of (|B xi| |A^* eta| + |<B xi, A^* eta>|)/2, A = p, B = u_t p.

    Independent brute force over real unit vectors (the optimum is real here).
    """
    p = np.diag([1.0, 0.0])
    s = np.sqrt(1 - t * t)
    u = np.array([[t, s], [s, -t]])
    A, B = p, u @ p
    ang = np.linspace(0, np.pi, grid)
    vecs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    Bx = vecs @ B.T
    Ay = vecs @ A  # rows are (A^* eta)^T
    nb = np.linalg.norm(Bx, axis=1)[:, None]
    na = np.linalg.norm(Ay, axis=1)[None, :]
    return float(np.max((nb * na + np.abs(Bx @ Ay.T)) / 2))


def test_gamma_oracle_matches_closed_form():
    for t in (0.05, 0.1, 0.2, 0.5):
        assert gamma_oracle(t) == pytest.approx((1 + t) / 2, abs=1e-6)


def test_tensor_blocks_expand_to_coefficients():
    rng = np.random.default_rng(0)
    u = sn.random_tensor(M2, M2, 2, rng)
    back = sn.tensor_from_json(json.loads(json.dumps(u.to_json())))
    assert np.max(np.abs(back.coeffs - u.coeffs)) <= 1e-12


def test_star_is_an_involution():
    rng = np.random.default_rng(1)
    u = sn.random_tensor(M2, M2, 2, rng)
    assert np.max(np.abs(u.star().star().coeffs - u.coeffs)) <= 1e-12
    assert (u + u.star()).is_hermitian()


def test_eval_identity_pair_is_product():
    rng = np.random.default_rng(2)
    y, s, x = (mc.random_complex(rng, 2, 2) for _ in range(3))
    u = sn.elementary(M2, M2, y, s, x)
    out = sn.eval_pair(sn.identity_pair(M2, M2), u)
    assert np.allclose(out, mc.adjoint(y) @ s @ x)


def test_eval_state_pair():
    rng = np.random.default_rng(3)
    y, s, x = (mc.random_complex(rng, 2, 2) for _ in range(3))
    u = sn.elementary(M2, M2, y, s, x)
    L = mc.random_contraction(rng, 2, 2)
    R = mc.random_contraction(rng, 2, 2)
    omega = np.array([1.0, 0.0])
    pair = sn.state_pair(M2, M2, L, R, 1, omega)
    assert sn.verify_pair(pair)
    phi = lambda z: L @ z @ R
    assert np.allclose(sn.eval_pair(pair, u), s[0, 0] * mc.adjoint(phi(y)) @ phi(x))


def test_eval_is_bilinear_in_scalars():
    rng = np.random.default_rng(4)
    u = sn.random_tensor(M2, M2, 2, rng)
    a, b = mc.random_complex(rng, 2, 2), mc.random_complex(rng, 2, 2)
    pair = sn.identity_pair(M2, M2)
    lhs = sn.eval_pair(pair, u.conjugate_by(a, b))
    mid = sn.eval_pair(pair, u)
    k = pair.H
    assert np.allclose(lhs, np.kron(a, np.eye(k)) @ mid @ np.kron(b, np.eye(k)))


def test_unit_and_projection_tensors():
    one = sn.elementary_es(M2, np.eye(2), np.eye(2))
    iv = sn.sym_norm(one, restarts=2, truncation=2)
    assert iv.lower == pytest.approx(1) and iv.upper == pytest.approx(1)
    p = np.diag([1.0, 0.0])
    iv = sn.sym_norm(sn.elementary_es(M2, p, p), restarts=2, truncation=2)
    assert iv.lower == pytest.approx(1) and iv.upper == pytest.approx(1)


def test_gamma_tensor_interval():
    t = 0.1
    p = np.diag([1.0, 0.0])
    s = np.sqrt(1 - t * t)
    u_t = np.array([[t, s], [s, -t]])
    u = sn.elementary_es(M2, p, u_t @ p)
    iv = sn.sym_norm(u, restarts=4, truncation=4)
    target = gamma_oracle(t)
    assert iv.lower <= target + 1e-6 and iv.upper >= target - 1e-6
    assert iv.width <= 1e-3
    assert sn.haagerup_upper(u).value == pytest.approx(1)


def test_plus_norm_examples():
    I = np.eye(2)
    p = np.diag([1.0, 0.0])
    assert sn.plus_norm([(I, I)], truncation=2, restarts=2).lower == pytest.approx(1)
    assert sn.plus_norm([(p, p)], truncation=2, restarts=2).lower == pytest.approx(1)
    t = 0.1
    s = np.sqrt(1 - t * t)
    u_t = np.array([[t, s], [s, -t]])
    iv = sn.plus_norm([(p, u_t @ p)], truncation=4, restarts=4)
    for val in iv.info["per_k"]:
        assert val == pytest.approx(gamma_oracle(t), abs=1e-3)


def test_plus_norm_monotone_in_truncation():
    rng = np.random.default_rng(5)
    pairs = [(mc.random_complex(rng, 2, 2), mc.random_complex(rng, 2, 2)) for _ in range(2)]
    per_k = sn.plus_norm(pairs, truncation=3, restarts=4).info["per_k"]
    assert all(b >= a - 1e-6 for a, b in zip(per_k, per_k[1:]))


def test_haagerup_upper_examples():
    rng = np.random.default_rng(6)
    y = mc.random_complex(rng, 2, 2)
    x = mc.random_complex(rng, 2, 2)
    y, x = y / mc.op_norm(y), x / mc.op_norm(x)
    f = sn.haagerup_upper(sn.elementary_es(M2, y, x))
    assert f.value == pytest.approx(1)
    assert sn.haagerup_upper(sn.zero_tensor(M2, M2)).value == 0
    s = mc.random_complex(rng, 2, 2)
    u = sn.elementary(M2, M2, y, s, x)
    f = sn.haagerup_upper(u)
    assert f.value <= mc.op_norm(s) + 1e-9
    assert sn.verify_factorisation(u, f)


def test_upper_bounds_dominate_pair_values():
    rng = np.random.default_rng(7)
    u = sn.random_tensor(M2, M2, 2, rng)
    up = min(sn.haagerup_upper(u).value, sn.split_upper(u))
    for t in range(20):
        Z = mc.random_contraction(rng, 4, 4)
        pair = sn.pair_from_contraction(M2, M2, Z, 2, 2)
        assert sn.verify_pair(pair)
        assert mc.op_norm(sn.eval_pair(pair, u)) <= up + 1e-9


def test_rank_one_upper_is_sound():
    rng = np.random.default_rng(8)
    y, x = mc.random_complex(rng, 2, 2), mc.random_complex(rng, 2, 2)
    u = sn.elementary_es(M2, y, x)
    bound = sn.rank_one_upper(u)
    expected = (mc.op_norm(y) * mc.op_norm(x) + mc.op_norm(mc.adjoint(y) @ x)) / 2
    assert bound == pytest.approx(expected)
    iv = sn.sym_norm(u, restarts=4)
    assert iv.lower <= bound + 1e-9


def test_polarised_witness_orthogonal_blocks():
    x = np.zeros((2, 2))
    x[0, 0] = 1
    y = np.zeros((2, 2))
    y[1, 1] = 1
    f = sn.coordinate_functional(2, 2, 0, 0)
    g = sn.coordinate_functional(2, 2, 1, 1)
    pair = sn.polarised_witness(M2, C, f, g, x, y)
    assert sn.verify_pair(pair)
    val = mc.op_norm(sn.eval_pair(pair, sn.elementary_es(M2, y, x)))
    assert val == pytest.approx(0.25)


def test_polarised_witness_diagonal_case_and_errors():
    x = np.diag([1.0, 0.0])
    f = sn.coordinate_functional(2, 2, 0, 0)
    pair = sn.polarised_witness(M2, C, f, f, x, x)
    assert mc.op_norm(sn.eval_pair(pair, sn.elementary_es(M2, x, x))) == pytest.approx(1)
    big = sn.VectorFunctional(np.array([2.0, 0]), np.array([1.0, 0]))
    with pytest.raises(PreconditionError):
        sn.polarised_witness(M2, C, big, f, x, np.diag([0.0, 1.0]))


def test_find_polarised_witness_unavailable():
    E = osp.scalars()
    with pytest.raises(WitnessUnavailable):
        sn.find_polarised_witness(E, C, np.ones((1, 1)), np.ones((1, 1)))


def test_involution_isometry_overlap():
    rng = np.random.default_rng(9)
    u = sn.random_tensor(M2, M2, 1, rng)
    a = sn.sym_norm(u, restarts=4)
    b = sn.sym_norm(u.star(), restarts=4)
    assert a.overlaps(b, slack=1e-6)


def test_werner_functional_bound():
    rng = np.random.default_rng(10)
    u = sn.random_tensor(M2, M2, 1, rng)
    up = sn.sym_norm(u, restarts=2).upper
    w = sn.offdiag(u)
    for _ in range(10):
        pair = sn.pair_from_contraction(M2, M2, mc.random_contraction(rng, 4, 4), 2, 2)
        M = sn.eval_pair(pair, w)
        v = mc.random_complex(rng, M.shape[0])
        v = v / np.linalg.norm(v)
        assert abs(np.vdot(v, M @ v)) <= up + 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sandwich_on_random_elementary(seed):
    rng = np.random.default_rng(seed)
    y, x = mc.random_complex(rng, 2, 2), mc.random_complex(rng, 2, 2)
    u = sn.elementary_es(M2, y, x)
    iv = sn.sym_norm(u, restarts=2, truncation=2)
    h = sn.haagerup_upper(u).value
    assert iv.lower <= h + 1e-9
    assert 4 * iv.lower >= mc.op_norm(y) * mc.op_norm(x) - 1e-6
