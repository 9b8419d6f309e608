import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opsym import cones
from opsym import fnspace as fs
from opsym import matcore as mc
from opsym import opspace as osp
from opsym import symnorm as sn
from opsym.errors import EmptySupport, KernelIsPositive, NotHermitian, ParseError


def test_kernel_of_rank_one_tensor():
    D2 = osp.diagonal_space(2)
    f = np.eye(2)  # f = (1, 1) as a diagonal matrix
    u = sn.elementary_es(D2, f, f)
    K = fs.kernel_of_tensor(u)
    assert np.allclose(K.values[:, :, 0, 0], np.ones((2, 2)))


def test_diagonal_unit_kernel():
    D3 = osp.diagonal_space(3)
    c = np.zeros((3, 1, 3))
    for i in range(3):
        c[i, 0, i] = 1
    K = fs.kernel_of_tensor(sn.TensorElement(D3, osp.scalars(), c[None, None]))
    assert np.allclose(K.values[:, :, 0, 0], np.eye(3))
    assert np.allclose(fs.diagonal_unit_kernel(3).values, K.values)


def test_kernel_round_trip_through_tensor():
    rng = np.random.default_rng(0)
    K = fs.random_hermitian_kernel(rng, 3, 2)
    u = fs.tensor_of_kernel(K)
    assert np.allclose(fs.kernel_of_tensor(u).values, K.values)
    # evaluation agrees with a direct contraction of the coefficients
    x, y = 0, 2
    direct = u.coeffs[:, :, x, 0, y]
    assert np.allclose(K.values[x, y], direct)


def test_positive_kernels():
    assert fs.is_positive_kernel(fs.KernelFunction(np.ones((2, 2)))).positive
    rng = np.random.default_rng(1)
    K = fs.gram_kernel(mc.random_complex(rng, 3, 4, 2))
    assert fs.is_positive_kernel(K).positive


def test_non_positive_kernel_eigenvalue():
    v = fs.is_positive_kernel(fs.KernelFunction(np.array([[1.0, 2.0], [2.0, 1.0]])))
    assert not v.positive
    assert v.min_eig == pytest.approx(-1)


def test_non_hermitian_kernel_rejected():
    with pytest.raises(NotHermitian):
        fs.is_positive_kernel(fs.KernelFunction(np.array([[1.0, 2.0], [0.0, 1.0]])))


def test_integral_operator():
    K = fs.KernelFunction(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert np.allclose(fs.integral_operator(K, fs.dirac(1)), [[1.0]])
    T = fs.integral_operator(K, fs.DiscreteMeasure([0, 1], [1.0, 1.0]))
    assert mc.min_eig(T) <= -1 + 1e-9
    rng = np.random.default_rng(2)
    P = fs.random_hermitian_kernel(rng, 4, 2, positive=True)
    assert mc.is_psd(fs.integral_operator(P, fs.uniform_measure(range(4))))
    with pytest.raises(EmptySupport):
        fs.uniform_measure([])


def test_refutation_pair_from_kernel():
    K = fs.KernelFunction(np.array([[1.0, 2.0], [2.0, 1.0]]))
    pair, mu, lam = fs.refutation_pair_from_kernel(K)
    assert sn.verify_pair(pair)
    u = fs.tensor_of_kernel(K)
    ev = mc.min_eig(sn.eval_pair(pair, u))
    assert ev == pytest.approx(lam)
    assert ev <= -1e-9
    with pytest.raises(KernelIsPositive):
        fs.refutation_pair_from_kernel(fs.KernelFunction(np.ones((2, 2))))


def test_block_kernel_refutation_accepted_by_cones():
    rng = np.random.default_rng(3)
    for _ in range(20):
        K = fs.random_hermitian_kernel(rng, 2, 2)
        if not fs.is_positive_kernel(K).positive:
            break
    pair, _, _ = fs.refutation_pair_from_kernel(K)
    cert = cones.refutation_from_pair(fs.tensor_of_kernel(K), pair)
    assert cert.is_refuted
    assert cones.verify_refutation(fs.tensor_of_kernel(K), cert.witness)


def test_archimedean_unit():
    rng = np.random.default_rng(4)
    K = fs.random_hermitian_kernel(rng, 3, 2)
    r = mc.op_norm(K.block_matrix())
    shifted = fs.KernelFunction(K.values + r * np.kron(np.eye(3), np.eye(2)).reshape(3, 2, 3, 2).transpose(0, 2, 1, 3))
    assert fs.is_positive_kernel(shifted).positive


def test_kernel_and_measure_json():
    rng = np.random.default_rng(5)
    K = fs.random_hermitian_kernel(rng, 2, 2)
    back = fs.kernel_from_json(json.loads(json.dumps(K.to_json())))
    assert np.array_equal(back.values, K.values)
    mu = fs.measure_from_json(fs.uniform_measure([0, 2]).to_json())
    assert mu.is_probability
    with pytest.raises(ParseError):
        fs.kernel_from_json({"omega": 2})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 2))
def test_equivalence_of_kernel_and_cone_verdicts(seed, omega, n):
    rng = np.random.default_rng(seed)
    K = fs.random_hermitian_kernel(rng, omega, n, positive=bool(seed % 2))
    u = fs.tensor_of_kernel(K)
    if fs.is_positive_kernel(K).positive:
        assert not cones.refute_positive(u, restarts=2).is_refuted
    else:
        pair, _, _ = fs.refutation_pair_from_kernel(K)
        assert cones.refutation_from_pair(u, pair).is_refuted
