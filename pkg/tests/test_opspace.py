import json

import numpy as np
import pytest

from opsym import matcore as mc
from opsym import opspace as osp
from opsym.errors import InconsistentElement, ParseError


def test_builtin_spaces_have_expected_shapes():
    assert osp.row_space(3).basis.shape == (3, 1, 3)
    assert osp.column_space(2).basis.shape == (2, 2, 1)
    assert osp.diagonal_space(3).is_system
    assert osp.full_algebra(2).dim == 4
    assert osp.rect_space(3, 2).basis.shape == (6, 3, 2)
    assert osp.builtin_space("M4x2").dim == 8
    assert osp.builtin_space("C").dim == 1
    with pytest.raises(ParseError):
        osp.builtin_space("Q7")


def test_dependent_basis_rejected():
    with pytest.raises(ValueError):
        osp.ConcreteOpSpace(np.array([np.eye(2), 2 * np.eye(2)]))


def test_coords_and_projection():
    E = osp.full_algebra(2)
    A = np.array([[1, 2j], [3, 4]])
    c = E.coords(A)
    assert np.allclose(E.element(c), A)
    D = osp.diagonal_space(2)
    c, res = D.project_onto(A)
    assert np.allclose(c, [1, 4])
    assert res == pytest.approx(np.sqrt(4 + 9))


def test_level_element_consistency():
    E = osp.row_space(2)
    x = E.level(np.array([[[1, 0]], [[0, 1]]]))  # 2x1 column of rows -> identity
    assert np.allclose(x.concrete, np.eye(2))
    assert osp.level_norm(x) == pytest.approx(1)
    with pytest.raises(InconsistentElement):
        osp.LevelElement(E, x.coeffs, concrete=np.zeros((2, 2)))


def test_row_and_column_norms_differ_at_level_one():
    # the basis of R_n stacked as a column is the identity; laid out as a row it
    # is a unit vector of length n^2 with n ones.  C_n is the mirror image.
    R = osp.row_space(3)
    assert osp.level_norm(R.level(np.eye(3)[None])) == pytest.approx(np.sqrt(3))
    assert osp.level_norm(R.level(np.eye(3)[:, None, :])) == pytest.approx(1)
    C = osp.column_space(3)
    assert osp.level_norm(C.level(np.eye(3)[None])) == pytest.approx(1)
    assert osp.level_norm(C.level(np.eye(3)[:, None, :])) == pytest.approx(np.sqrt(3))


def test_adjoint_space_and_star():
    E = osp.row_space(2)
    Es = osp.adjoint_space(E)
    assert Es.basis.shape == (2, 2, 1)
    assert osp.adjoint_space(E) is Es
    x = E.random_element(np.random.default_rng(0), 2, 3)
    xs = x.star()
    assert np.allclose(xs.concrete, mc.adjoint(x.concrete))


def test_space_json_round_trip():
    E = osp.full_algebra(2)
    F = osp.space_from_json(json.loads(json.dumps(E.to_json())))
    assert np.array_equal(F.basis, E.basis)
    assert F.is_system and np.allclose(F.unit, E.unit)
    with pytest.raises(ParseError):
        osp.space_from_json({"h": 2})


def test_span_system_detection():
    S = osp.span([np.eye(2), np.array([[0, 1], [1, 0]])], system=True)
    assert S.is_system
    assert S.is_selfadjoint()


def test_direct_sum_algebra():
    A = osp.direct_sum_algebra(1, 2)
    assert A.dim == 5 and A.is_system
