import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocyclelab import shipped
from cocyclelab.cocycle import MatrixCocycle, compound
from cocyclelab.errors import ValidationError
from cocyclelab.typicality import (all_minors, eigenbasis, find_typical_witness, periodic_matrix,
                                   pinching_check, pinching_from_matrix, twisting_check,
                                   twisting_from_matrix, verify)


def test_periodic_matrix_order():
    A, _ = shipped.typical_sl2()
    # block (0, 1): x_0 = 1, x_1 = 0, so A^2 = A(0) A(1)
    np.testing.assert_allclose(periodic_matrix(A, (0, 1)), A.gens[0] @ A.gens[1], atol=1e-15)


def test_pinching_from_matrix_cases():
    assert pinching_from_matrix(np.diag([3.0, 2.0, 1.0]), 1).passed
    assert pinching_from_matrix(np.diag([3.0, 2.0, 1.0]), 2).passed
    assert not pinching_from_matrix(np.diag([2.0, 2.0, 1.0]), 1).passed
    assert not pinching_from_matrix(shipped.rotation(0.3), 1).passed


def test_minor_count():
    # sum over k of C(3, k)^2
    assert len(all_minors(np.ones((3, 3)))) == 19


def test_twisting_from_matrix_cases():
    assert twisting_from_matrix(np.array([[1.0, 1.0], [1.0, 2.0]])).passed
    assert not twisting_from_matrix(np.eye(2)).passed
    assert not twisting_from_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])).passed


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_minors_of_compound_are_minors(a, b):
    g = np.array([[a, 1.0, 0.5], [0.2, b, 1.0], [1.0, 0.3, a * b]])
    dets = {(r, c): m for r, c, m in all_minors(g) if len(r) == 2}
    C2 = compound(g, 2)
    assert sorted(np.round(C2.ravel(), 10)) == sorted(np.round(list(dets.values()), 10))


def test_eigenbasis_requires_real_spectrum():
    with pytest.raises(ValidationError):
        eigenbasis(shipped.rotation(0.5))
    E = eigenbasis(np.array([[2.0, 1.0], [0.0, 0.5]]))
    np.testing.assert_allclose(np.linalg.norm(E, axis=0), 1.0)


def test_typical_example_has_witness():
    A, base = shipped.typical_sl2()
    cert = find_typical_witness(A, base)
    assert cert is not None and cert.ok
    again = verify(A, cert.block, cert.bridge, base)
    assert again.ok and again.min_relative_minor > 1e-8
    assert pinching_check(A, cert.block, 1, base).passed
    assert twisting_check(A, cert.block, cert.bridge, 1, base).passed


def test_diagonal_fails_twisting():
    A, base = shipped.diagonal()
    cert = verify(A, (0,), (1,), base)
    assert cert.passed["pinching_1"] and not cert.passed["twisting_1"]
    assert find_typical_witness(A, base, search_budget=300) is None


def test_rotations_fail_pinching():
    A, base = shipped.rotations()
    assert find_typical_witness(A, base, search_budget=300) is None


def test_generic_three_dimensional_is_typical():
    g = np.random.default_rng(3).normal(size=(2, 3, 3))
    cert = find_typical_witness(MatrixCocycle.from_symbols(g))
    assert cert is not None
    assert set(cert.passed) == {"pinching_1", "pinching_2", "twisting_1", "twisting_2"}
    assert cert.ok
