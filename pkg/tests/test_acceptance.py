"""Acceptance criteria 1-9, one or more checks each; a summary line per criterion is printed at the end of the run."""
import math
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import GOLDEN_OMEGA, graded_max_diff, random_field, random_poly, record
from liemaps.dynamics import GridSpec, apparent_convergence_scan, dynamical_aperture, level_curve
from liemaps.estimates import divisor_sequences, estimate_report
from liemaps.lie import GeneratingSequence, TruncatedTransform, compose_transforms, lie_derivative, transform_apply
from liemaps.maps import extract_generators, henon_map, realize_map
from liemaps.normalform import apply_D, conjugacy_residual, normalize, structure_checks, synthesize_control
from liemaps.plot import emit_plot
from liemaps.polyalg import COMPLEX, HomogeneousPoly, action, points_to_complex

RHO_LIST = [0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00]
R_LIST = list(range(2, 21, 2))
TARGET_R = 10
THRESHOLD = 0.02


def _check(criterion, name, passed, detail=""):
    record(criterion, name, passed, detail)
    print(f"criterion {criterion} [{name}]: {'PASS' if passed else 'FAIL'} {detail}")
    assert passed, f"criterion {criterion} [{name}] {detail}"


@pytest.fixture(scope="module")
def scans():
    t0 = time.perf_counter()
    pm = henon_map(GOLDEN_OMEGA)
    nf = normalize(extract_generators(pm, 20), 20, 20)
    plain = apparent_convergence_scan(nf, RHO_LIST, R_LIST, TARGET_R, THRESHOLD)
    plan = synthesize_control(extract_generators(pm, 3), 1, 3)
    # normal form of the realized controlled map, the one whose aperture is measured
    nfc = normalize(extract_generators(plan.controlled_map(), 20), 20, 20)
    f3 = apparent_convergence_scan(nfc, RHO_LIST, R_LIST, TARGET_R, THRESHOLD)
    return plain, f3, time.perf_counter() - t0


@pytest.fixture(scope="module")
def desk_aperture():
    t0 = time.perf_counter()
    ap = dynamical_aperture(henon_map(GOLDEN_OMEGA), GridSpec.from_count(4000, 1.2), 10_000, 1.2)
    return ap, time.perf_counter() - t0


# 1 ---------------------------------------------------------------------------

def test_criterion_1_henon_round_trip():
    t0 = time.perf_counter()
    pm = henon_map(GOLDEN_OMEGA)
    rep = extract_generators(pm, 9)
    V1 = rep.generators[1]
    resid = max(abs(V1[1].coefficient((2, 0)) - 1.0), V1[0].max_abs(), (V1[1].norm() - 1.0),
                max(rep.generators[s].max_abs() for s in range(2, 10)))
    exact = realize_map(rep, 10).max_difference(pm)
    forms = realize_map(rep.converted("T_then_R"), 10).max_difference(realize_map(rep, 10))
    elapsed = time.perf_counter() - t0
    _check(1, "generator", resid < 1e-14, f"residual={resid:.1e}")
    _check(1, "realize", exact == 0.0, f"max diff={exact:.1e}")
    _check(1, "forms", forms < 1e-11, f"max diff={forms:.1e}")
    _check(1, "runtime", elapsed < 1.0, f"{elapsed:.2f}s")


# 2 ---------------------------------------------------------------------------

def _amplitude_points(rng, amp, n=32):
    th = rng.uniform(0, 2 * np.pi, size=n)
    return points_to_complex(amp * np.column_stack([np.cos(th), np.sin(th)]))


def test_criterion_2_conjugation_identities():
    t0 = time.perf_counter()
    nf = normalize(extract_generators(henon_map(GOLDEN_OMEGA), 12), 12, 12)
    worst = 0.0
    for s in range(1, 13):
        psi = nf.psi[s]
        lhs = apply_D(nf.rotation, nf.X_seq[s]) + nf.Z_seq[s]
        worst = max(worst, (lhs - psi).max_abs() / psi.norm())
    elapsed = time.perf_counter() - t0
    _check(2, "identities", worst <= 1e-13, f"max relative residual={worst:.1e}")
    _check(2, "runtime", elapsed < 60, f"{elapsed:.2f}s")


def test_criterion_2_conjugacy_remainder_exponent(nf12):
    pm = henon_map(GOLDEN_OMEGA)
    rng = np.random.default_rng(0)
    amps = (1e-3, 2e-3)
    vals = [conjugacy_residual(nf12, pm, _amplitude_points(rng, a)).max() for a in amps]
    slope = math.log(vals[1] / vals[0]) / math.log(amps[1] / amps[0])
    _check(2, "remainder exponent", slope >= 12 + 1.5,
           f"residuals={vals[0]:.2e},{vals[1]:.2e} fitted exponent={slope:.2f} (need >= 13.5)")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_normal_form_structure(nf12):
    odd = max(nf12.Z_seq[s].max_abs() for s in range(1, 13, 2))
    I = action(1, 0, COMPLEX)
    inv = max(nf12.Z_seq.E(s, I).norm() for s in range(1, 13))
    sc = structure_checks(nf12)
    symp = max(max(sc["symplectic_X"].values()), max(sc["symplectic_Z"].values()))
    _check(3, "odd orders vanish", odd == 0.0, f"max |Z_odd|={odd:.1e}")
    _check(3, "action invariance", inv <= 1e-12, f"max |E_s^Z I|={inv:.1e}")
    _check(3, "symplecticity", symp <= 1e-10, f"max residual={symp:.1e}")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_control_effectiveness():
    t0 = time.perf_counter()
    rep = extract_generators(henon_map(GOLDEN_OMEGA), 6)
    plan = synthesize_control(rep, 1, 6)
    nfc = normalize(plan.controlled_representation(), 1, 6)
    A = plan.G_seq[1].norm()
    B = 8 * (1 + 2) * A
    ratio = max(nfc.Q_seq[s].norm() / (A * B ** (s - 1)) for s in range(2, 7))
    elapsed = time.perf_counter() - t0
    _check(4, "remainder", ratio <= 1e-10, f"max |Q_s|/(|W_1| B^(s-1))={ratio:.1e}")
    _check(4, "runtime", elapsed < 60, f"{elapsed:.2f}s")


# 5 ---------------------------------------------------------------------------

def _unit(field):
    return field.scale(1.0 / field.norm())


def test_criterion_5_composition():
    rng = np.random.default_rng(5)
    basis = [HomogeneousPoly.monomial(1, e) for e in ((2, 0), (1, 1), (0, 2))]
    worst = 0.0
    for _ in range(20):
        X = GeneratingSequence(1, {s: _unit(random_field(rng, 1, s, 3)) for s in (1, 2, 3)}, 8)
        Y = GeneratingSequence(1, {s: _unit(random_field(rng, 1, s, 3)) for s in (1, 2, 3)}, 8)
        Z = compose_transforms(X, Y)
        TX, TY, TZ = (TruncatedTransform(S, "forward", 10) for S in (X, Y, Z))
        for f in basis:
            worst = max(worst, graded_max_diff(transform_apply(TX, transform_apply(TY, f)), transform_apply(TZ, f)))
    _check(5, "composition", worst < 1e-10, f"max residual={worst:.1e}")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_lie_derivative_bounds():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        r, s = (int(v) for v in rng.integers(1, 6, size=2))
        n = int(rng.integers(1, 3))
        X, f, v = random_field(rng, n, r), random_poly(rng, n, s + 1), random_field(rng, n, s)
        worst = max(worst, lie_derivative(X, f).norm() / ((s + 1) * X.norm() * f.norm()),
                    lie_derivative(X, v).norm() / ((r + s + 2) * X.norm() * v.norm()))
    _check(6, "Lie derivative bounds", worst <= 1 + 1e-12, f"max ratio={worst:.3f}")


def test_criterion_6_generating_sequence_bounds():
    nf = normalize(extract_generators(henon_map(GOLDEN_OMEGA), 10), 10)
    dt = divisor_sequences(nf.rotation, 10)
    rpt = estimate_report(nf, dt, nf.G_seq[1].norm(), 0.0)
    growth = [row for row in rpt.rows if row["quantity"] in ("X", "Z")]
    solve = [row for row in rpt.rows if row["quantity"] == "X_solve"]
    _check(6, "sequence bounds", all(row["holds"] for row in growth),
           f"max ratio={max(row['ratio'] for row in growth):.1e}")
    _check(6, "per-order solve bound", all(row["holds"] for row in solve),
           f"max ratio={max(row['ratio'] for row in solve):.3f}")


# 7 ---------------------------------------------------------------------------

def test_criterion_7_loops_at_rho_060(scans):
    plain = scans[0]
    loops = {r: plain.loops[(0.60, r)] for r in R_LIST}
    ok = not any(loops[r] for r in R_LIST if r <= 18) and loops[20]
    _check(7, "rho=0.60 loop only at r=20", ok, f"first loop at r={plain.first_loop(0.60)}")


def test_criterion_7_first_loop_at_rho_070(scans):
    first = scans[0].first_loop(0.70)
    _check(7, "rho=0.70 first loop at r=12", first == 12, f"first loop at r={first}")


def test_criterion_7_uncontrolled_recommendation(scans):
    rho = scans[0].recommended_rho
    _check(7, "uncontrolled rho* in [0.70, 0.80]", rho is not None and 0.70 - 1e-9 <= rho <= 0.80 + 1e-9,
           f"rho*={rho}")


def test_criterion_7_controlled_recommendation(scans):
    rho = scans[1].recommended_rho
    _check(7, "F3 rho* in [0.85, 0.95]", rho is not None and 0.85 - 1e-9 <= rho <= 0.95 + 1e-9, f"rho*={rho}")


def test_criterion_7_runtime(scans):
    _check(7, "runtime", scans[2] < 600, f"{scans[2]:.1f}s")


# 8 ---------------------------------------------------------------------------

def test_criterion_8_desk_aperture(desk_aperture, nf20):
    ap, elapsed = desk_aperture
    pts = ap.grid.points()
    alive = ap.escape_time < 0
    inner = level_curve(nf20, 0.60, 10).contains(pts)
    outer = level_curve(nf20, 1.00, 10).contains(pts)
    dead_inside = int(np.sum(inner & ~alive))
    dead_outside = int(np.sum(~outer & ~alive))
    _check(8, "rho=0.60 interior survives", dead_inside == 0,
           f"{int(inner.sum())} enclosed points, {dead_inside} escaped")
    _check(8, "escape outside rho=1.00", dead_outside >= 1, f"{dead_outside} escaped points outside")
    _check(8, "grid", ap.grid.size >= 3960 and ap.N == 10_000 and ap.L == 1.2,
           f"{ap.grid.size} points, N={ap.N}, L={ap.L}, {elapsed:.1f}s")


# 9 ---------------------------------------------------------------------------

def test_criterion_9_figure_analogues(desk_aperture, nf20, tmp_path):
    ap = desk_aperture[0]
    figures = {
        "aperture": emit_plot(ap),
        "curves_rho060": emit_plot([level_curve(nf20, 0.60, r) for r in R_LIST]),
        "curves_rho070": emit_plot([level_curve(nf20, 0.70, r) for r in R_LIST]),
        "overlay_rho075": emit_plot([ap, level_curve(nf20, 0.75, TARGET_R)]),
    }
    rep = extract_generators(henon_map(GOLDEN_OMEGA), 4)
    for k in (2, 3, 4):
        cm = synthesize_control(rep, 1, k).controlled_map()
        figures[f"aperture_F{k}"] = emit_plot(dynamical_aperture(cm, GridSpec.from_count(1000, 1.2), 1000, 1.2))
    ok = True
    for name, svg in figures.items():
        (tmp_path / f"{name}.svg").write_text(svg)
        root = ET.fromstring(svg)
        ok &= root.tag.endswith("svg") and len(root) > 3
    paths = ET.fromstring(figures["curves_rho060"]).findall(".//{http://www.w3.org/2000/svg}path")
    ok &= len(paths) == len(R_LIST) and all(p.get("d").endswith("Z") for p in paths)
    _check(9, "figure analogues", ok, f"{len(figures)} SVG documents")
