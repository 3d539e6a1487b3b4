import json
import math
import warnings

import numpy as np
import pytest

from conftest import GOLDEN_OMEGA, random_field
from liemaps.lie import lie_derivative
from liemaps.maps import RotationSpec, extract_generators, henon_map, rotation_apply
from liemaps.normalform import (
    NearResonanceWarning,
    ResonanceError,
    ResonanceInfo,
    apply_D,
    conjugacy_residual,
    dw_eigenvalue,
    integrable_approximant,
    normalize,
    solve_homological,
    structure_checks,
    synthesize_control,
)
from liemaps.polyalg import HomogeneousPoly, PolyVectorField, drop_tolerance, points_to_complex


def _rand_points(rng, amp, n=16):
    ang = rng.uniform(0, 2 * np.pi, size=n)
    real = amp * np.column_stack([np.cos(ang), np.sin(ang)])
    return points_to_complex(real)


def test_eigenvalue_vanishes_on_action_times_own_coordinate():
    R = RotationSpec([GOLDEN_OMEGA])
    assert abs(dw_eigenvalue(R, ([2], [1], 1))) < 1e-15
    assert abs(dw_eigenvalue(R, ([1], [2], 2))) < 1e-15


def test_eigenvalue_matches_direct_rotation():
    R = RotationSpec([math.pi / 2])
    comps = [HomogeneousPoly.monomial(1, (2, 0)), HomogeneousPoly.zero(1, 2)]
    X = PolyVectorField(comps)
    lam = dw_eigenvalue(R, ([2], [0], 1))
    assert apply_D(R, X)[0].coefficient((2, 0)) == pytest.approx(lam)
    assert (rotation_apply(R, X) - X)[0].coefficient((2, 0)) == pytest.approx(lam)


def test_eigenvalue_zero_for_trivial_rotation():
    assert dw_eigenvalue(RotationSpec([0.0]), ([3], [1], 2)) == 0


def test_rotation_of_scalars():
    R = RotationSpec([math.pi / 2])
    xi2 = HomogeneousPoly.monomial(1, (2, 0))
    assert rotation_apply(R, xi2).allclose(-xi2, atol=1e-15)
    I = HomogeneousPoly.monomial(1, (1, 1), 1j)
    assert rotation_apply(RotationSpec([0.3]), I).allclose(I, atol=1e-15)
    rng = np.random.default_rng(0)
    f = random_field(rng, 1, 2)
    back = rotation_apply(R, rotation_apply(R, f), inverse=True)
    assert back.allclose(f, atol=1e-14)


def test_homological_split_reconstructs_psi():
    R = RotationSpec([GOLDEN_OMEGA])
    Psi = random_field(np.random.default_rng(1), 1, 2, nterms=8)
    X, Z = solve_homological(R, Psi, ResonanceInfo())
    assert (apply_D(R, X) + Z - Psi).max_abs() <= 1e-13 * Psi.norm()
    assert apply_D(R, Z).max_abs() < 1e-14
    X2, Z2 = solve_homological(R, Z, ResonanceInfo())
    assert X2.is_zero() and Z2.allclose(Z, atol=0)


def test_degree_two_kernel_is_empty():
    nf = normalize(extract_generators(henon_map(GOLDEN_OMEGA), 1), 1)
    assert nf.Z_seq[1].is_zero()


def test_henon_order_twenty_completes(nf20):
    assert nf20.order_r == 20
    assert all(v <= 1e-13 for v in nf20.residuals.values())
    assert all(nf20.Z_seq[s].is_zero() for s in range(1, 21, 2))


def test_structure_checks_at_order_twelve(nf12):
    sc = structure_checks(nf12)
    assert max(sc["kernel"].values()) < 1e-12
    assert max(sc["action"].values()) < 1e-12
    assert max(sc["symplectic_X"].values()) <= 1e-10
    assert max(sc["symplectic_Z"].values()) <= 1e-10


def test_brute_force_conjugacy_at_order_four():
    nf = normalize(extract_generators(henon_map(GOLDEN_OMEGA), 4), 4)
    pts = _rand_points(np.random.default_rng(2), 1e-3)
    res = conjugacy_residual(nf, henon_map(GOLDEN_OMEGA), pts)
    assert res.max() <= 1e-18


def test_conjugacy_remainder_exponent_at_moderate_amplitude(nf12):
    pm = henon_map(GOLDEN_OMEGA)
    rng = np.random.default_rng(3)
    amps = (0.1, 0.2)
    vals = [conjugacy_residual(nf12, pm, _rand_points(rng, a)).max() for a in amps]
    slope = math.log(vals[1] / vals[0]) / math.log(amps[1] / amps[0])
    assert slope >= 12 + 1.5


def test_strict_mode_rejects_accidental_resonance():
    # omega = 2 pi / 4 makes xi^3 in the eta equation resonant
    rep = extract_generators(henon_map(math.pi / 2), 3)
    with pytest.raises(ResonanceError) as err:
        normalize(rep, 3)
    assert err.value.monomials
    nf = normalize(rep, 3, mode="permissive")
    assert nf.resonance.resonance_module()
    assert all(v <= 1e-13 for v in nf.residuals.values())


def test_near_resonance_warns():
    rep = extract_generators(henon_map(math.pi / 2 + 1e-5), 3)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        nf = normalize(rep, 3)
    assert any(issubclass(x.category, NearResonanceWarning) for x in w)
    assert nf.resonance.near_resonances


def test_order_zero_is_pure_rotation():
    nf = normalize(extract_generators(henon_map(GOLDEN_OMEGA), 2), 0, 2)
    approx = integrable_approximant(nf)
    assert nf.X_seq.is_zero() and nf.Z_seq.truncated(0).is_zero()
    assert all(abs(c) < 1e-15 for d in approx.twist.delta for k, c in d.items())


def test_first_twist_coefficient_is_stable_under_tighter_drop_tolerance():
    rep = extract_generators(henon_map(GOLDEN_OMEGA), 2)
    a = integrable_approximant(normalize(rep, 2)).twist.delta[0]
    with drop_tolerance(1e-17):
        b = integrable_approximant(normalize(rep, 2)).twist.delta[0]
    assert set(a) == set(b)
    assert all(abs(a[k] - b[k]) <= 1e-14 * max(1.0, abs(a[k])) for k in a)
    assert any(abs(v) > 1e-3 for k, v in a.items() if sum(k) == 1)


def test_integrable_approximant_preserves_actions():
    nf = normalize(extract_generators(henon_map(GOLDEN_OMEGA), 6), 6)
    approx = integrable_approximant(nf)
    pts = _rand_points(np.random.default_rng(4), 0.3)
    assert np.max(np.abs(approx.action_change(pts))) < 1e-12


def test_control_plans_and_one_step_expansion():
    rep = extract_generators(henon_map(GOLDEN_OMEGA), 4)
    plans = {k: synthesize_control(rep, 1, k) for k in (2, 3, 4)}
    assert sorted(plans[4].norms()) == [2, 3, 4]
    assert plans[3].F_seq[2].allclose(plans[2].F_seq[2], atol=1e-15)
    assert not synthesize_control(rep, 1, 1).norms()
    # F_2 = -W_2 - (E_1^X W_1 - E_1^Z R X_1) / 2
    nf = normalize(rep, 1, 1)
    R = nf.rotation
    W = nf.G_seq
    X1 = nf.X_seq[1]
    hand = -W[2] - (lie_derivative(X1, W[1]) - lie_derivative(nf.Z_seq[1], rotation_apply(R, X1))).scale(0.5)
    assert plans[2].F_seq[2].allclose(hand, atol=1e-14)


def test_control_removes_remainder():
    rep = extract_generators(henon_map(GOLDEN_OMEGA), 6)
    plan = synthesize_control(rep, 1, 6)
    nfc = normalize(plan.controlled_representation(), 1, 6)
    assert all(nfc.Q_seq[s].norm() < 1e-12 for s in range(2, 7))
    assert np.isfinite(plan.controlled_map()(np.array([[0.1, 0.2]]))).all()


def test_result_serializes(nf12):
    d = json.loads(nf12.to_json())
    assert d["order_r"] == 12
    lines = nf12.norms_csv().strip().splitlines()
    assert len(lines) == 13
