import math

import numpy as np
import pytest

from liemaps import HomogeneousPoly, PolyVectorField, extract_generators, henon_map, normalize

GOLDEN_OMEGA = math.pi * (math.sqrt(5) - 1)

# criterion number -> list of (sub-check, passed, detail)
ACCEPTANCE = {}


def record(criterion, name, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((name, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        subs = ACCEPTANCE[k]
        ok = all(p for _, p, _ in subs)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}")
        for name, p, detail in subs:
            terminalreporter.write_line(f"    {'pass' if p else 'FAIL'}  {name}  {detail}")


def random_poly(rng, n_dof, degree, nterms=5, frame="complex"):
    exps = [rng.multinomial(degree, np.ones(2 * n_dof) / (2 * n_dof)) for _ in range(nterms)]
    coeffs = rng.normal(size=nterms)
    if frame == "complex":
        coeffs = coeffs + 1j * rng.normal(size=nterms)
    return HomogeneousPoly(n_dof, degree, exps, coeffs, frame)


def random_field(rng, n_dof, order, nterms=4, frame="complex"):
    return PolyVectorField([random_poly(rng, n_dof, order + 1, nterms, frame) for _ in range(2 * n_dof)])


def graded_max_diff(a, b):
    """Largest coefficient difference between two degree-graded lists."""
    da = {p.degree: p for p in a}
    db = {p.degree: p for p in b}
    worst = 0.0
    for d in set(da) | set(db):
        if d in da and d in db:
            worst = max(worst, (da[d] - db[d]).max_abs())
        else:
            worst = max(worst, (da[d] if d in da else db[d]).max_abs())
    return worst


@pytest.fixture(scope="session")
def henon():
    return henon_map(GOLDEN_OMEGA)


@pytest.fixture(scope="session")
def nf20(henon):
    return normalize(extract_generators(henon, 20), 20, 20)


@pytest.fixture(scope="session")
def nf12(henon):
    return normalize(extract_generators(henon, 12), 12, 12)
