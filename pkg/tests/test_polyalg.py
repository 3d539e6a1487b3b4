import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_field, random_poly
from liemaps.polyalg import (
    COMPLEX,
    REAL,
    FrameError,
    HomogeneousPoly,
    PolyVectorField,
    action,
    drop_tolerance,
    hamiltonian_field,
    hamiltonian_of,
    points_to_complex,
    points_to_real,
    poly_arith,
    poly_norm,
    symplecticity_check,
    to_complex,
    to_real,
)


def test_product_and_sum_of_variables():
    x = HomogeneousPoly.variable(1, 0)
    y = HomogeneousPoly.variable(1, 1)
    p = (x + y) * (x - y)
    assert p.terms == {(2, 0): 1.0, (0, 2): -1.0}


def test_duplicates_merge_and_cancel():
    p = HomogeneousPoly(1, 2, [[2, 0], [1, 1], [2, 0]], [1.0, 2.0, -1.0])
    assert p.terms == {(1, 1): 2.0}


def test_derivative_is_one_based_in_poly_arith():
    p = HomogeneousPoly.from_terms(1, {(2, 1): 3.0})
    d = poly_arith(p, kind="partial_derivative", index=1)
    assert d.terms == {(1, 1): 6.0}
    assert poly_arith(p, kind="partial_derivative", index=2).terms == {(2, 0): 3.0}


def test_degree_mismatch_on_add_raises():
    with pytest.raises(ValueError):
        HomogeneousPoly.variable(1, 0) + HomogeneousPoly.monomial(1, (2, 0))


def test_frame_mismatch_raises():
    x = HomogeneousPoly.variable(1, 0, REAL)
    with pytest.raises(FrameError):
        x + HomogeneousPoly.variable(1, 0, COMPLEX)


def test_drop_tolerance_removes_tiny_terms():
    p = HomogeneousPoly.from_terms(1, {(1, 0): 1.0, (0, 1): 1e-20})
    q = p + HomogeneousPoly.zero(1, 1)
    assert len(q) == 1
    with drop_tolerance(0.0):
        p = HomogeneousPoly.from_terms(1, {(1, 0): 1.0, (0, 1): 1e-20})
        assert len(p + HomogeneousPoly.zero(1, 1)) == 2


def test_norm_is_sum_of_moduli():
    p = HomogeneousPoly.from_terms(1, {(2, 0): 3 + 4j, (0, 2): -1.0})
    assert p.norm() == pytest.approx(6.0)
    f = PolyVectorField([p, p])
    assert poly_norm(f) == pytest.approx(12.0)


def test_evaluation_matches_direct_formula():
    p = HomogeneousPoly.from_terms(1, {(2, 1): 2.0, (0, 3): -1.0}, frame=REAL)
    z = np.array([[0.3, -0.7], [1.1, 0.2]])
    expect = 2 * z[:, 0] ** 2 * z[:, 1] - z[:, 1] ** 3
    assert np.allclose(p(z), expect)


def test_action_in_complex_frame():
    I = to_complex(action(1, 0, REAL))
    assert I.allclose(HomogeneousPoly.from_terms(1, {(1, 1): 1j}))


def test_point_frame_round_trip():
    z = np.random.default_rng(0).normal(size=(10, 4))
    assert np.allclose(points_to_real(points_to_complex(z)), z, atol=1e-15)


def test_polynomial_frame_change_commutes_with_evaluation():
    rng = np.random.default_rng(1)
    p = random_poly(rng, 2, 3, frame=REAL)
    z = rng.normal(size=(6, 4))
    assert np.allclose(to_complex(p)(points_to_complex(z)), p(z), atol=1e-12)


def test_field_frame_change_is_push_forward():
    rng = np.random.default_rng(2)
    f = random_field(rng, 1, 2, frame=REAL)
    z = rng.normal(size=(5, 2))
    fc = to_complex(f)
    assert np.allclose(points_to_real(fc(points_to_complex(z))), f(z), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2), st.integers(1, 4))
def test_frame_round_trip_property(seed, n_dof, order):
    rng = np.random.default_rng(seed)
    f = random_field(rng, n_dof, order, frame=REAL)
    assert (to_real(to_complex(f)) - f).max_abs() <= 1e-13 * max(1.0, f.max_abs())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_product_is_commutative_and_distributive(seed):
    rng = np.random.default_rng(seed)
    a, b, c = random_poly(rng, 2, 2), random_poly(rng, 2, 3), random_poly(rng, 2, 3)
    assert (a * b).allclose(b * a, atol=1e-12)
    assert (a * (b + c)).allclose(a * b + a * c, atol=1e-12)


def test_hamiltonian_field_is_symplectic_and_recovered():
    H = HomogeneousPoly.from_terms(1, {(3, 0): -1.0 / 3.0}, frame=REAL)
    X = hamiltonian_field(H)
    assert X.allclose(PolyVectorField([HomogeneousPoly.zero(1, 2, REAL),
                                       HomogeneousPoly.from_terms(1, {(2, 0): 1.0}, frame=REAL)]))
    ok, resid = symplecticity_check(X)
    assert ok and resid == 0.0
    assert hamiltonian_of(X).allclose(H)


def test_non_symplectic_field_is_flagged():
    X = PolyVectorField([HomogeneousPoly.from_terms(1, {(2, 0): 1.0}, frame=REAL), HomogeneousPoly.zero(1, 2, REAL)])
    ok, resid = symplecticity_check(X)
    assert not ok and resid > 0


def test_serialization_round_trip():
    rng = np.random.default_rng(3)
    p = random_poly(rng, 2, 4)
    assert HomogeneousPoly.from_dict(json.loads(p.to_json())).allclose(p, atol=0)
    f = random_field(rng, 1, 3)
    assert PolyVectorField.from_dict(f.to_dict()).allclose(f, atol=0)


def test_scalar_multiplication():
    p = HomogeneousPoly.from_terms(1, {(1, 1): 2.0})
    assert (p * 0.5).terms == {(1, 1): 1.0}
    assert (3 * p).coefficient((1, 1)) == 6.0
    assert math.isclose(p.max_abs(), 2.0)
