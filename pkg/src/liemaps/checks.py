"""Invariant suite run by ``liemaps verify``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie import GeneratingSequence, TruncatedTransform, compose_transforms, transform_apply
from .maps import MapRepresentation, PolyMap, extract_generators, realize_map
from .normalform import normalize, structure_checks, synthesize_control
from .polyalg import COMPLEX, HomogeneousPoly, PolyVectorField, to_complex, to_real


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": float(self.value), "limit": float(self.limit)}


def _random_field(rng, n_dof, order, frame=COMPLEX, nterms=4):
    comps = []
    for _ in range(2 * n_dof):
        exps = []
        for _ in range(nterms):
            e = rng.multinomial(order + 1, np.ones(2 * n_dof) / (2 * n_dof))
            exps.append(e)
        coeffs = rng.normal(size=nterms) + 1j * rng.normal(size=nterms)
        comps.append(HomogeneousPoly(n_dof, order + 1, exps, coeffs, frame))
    return PolyVectorField(comps)


def _random_poly(rng, n_dof, degree, frame=COMPLEX, nterms=4):
    exps = [rng.multinomial(degree, np.ones(2 * n_dof) / (2 * n_dof)) for _ in range(nterms)]
    coeffs = rng.normal(size=nterms) + 1j * rng.normal(size=nterms)
    return HomogeneousPoly(n_dof, degree, exps, coeffs, frame)


def run_checks(pmap: PolyMap, r: int, s_max: int, control_extents=(), tolerance=1e-10, mode="strict",
               seed: int = 0) -> list[CheckResult]:
    """Frame round trip, map round trip, conjugation residuals, structure, control and composition."""
    out = []
    rng = np.random.default_rng(seed)

    f = _random_field(rng, pmap.n_dof, 2, frame="real")
    out.append(CheckResult("frame_round_trip", (to_real(to_complex(f)) - f).max_abs() <= 1e-13,
                           (to_real(to_complex(f)) - f).max_abs(), 1e-13))

    rep = extract_generators(pmap, s_max)
    diff = realize_map(rep, pmap.d_max).max_difference(pmap) if pmap.d_max <= s_max + 1 else \
        realize_map(rep, s_max + 1).max_difference(pmap, through=s_max + 1)
    out.append(CheckResult("map_round_trip", diff <= 1e-11, diff, 1e-11))
    other = realize_map(rep.converted("T_then_R"), s_max + 1)
    d2 = other.max_difference(realize_map(rep, s_max + 1))
    out.append(CheckResult("forms_agree", d2 <= 1e-11, d2, 1e-11))

    nf = normalize(rep, r, s_max, tolerance=tolerance, mode=mode)
    worst = max(nf.residuals.values(), default=0.0)
    out.append(CheckResult("conjugation_residual", worst <= 1e-13, worst, 1e-13))
    sc = structure_checks(nf)
    # relative to the coefficient scale of each order
    scale_Z = {s: max(1.0, nf.Z_seq[s].norm()) for s in sc["kernel"]}
    scale_X = {s: max(1.0, nf.X_seq[s].norm()) for s in sc["kernel"]}
    k = max(sc["kernel"].values(), default=0.0)
    out.append(CheckResult("kernel_residual", k <= 1e-12, k, 1e-12))
    a = max((v / scale_Z[s] for s, v in sc["action"].items()), default=0.0)
    out.append(CheckResult("action_invariance", a <= 1e-12, a, 1e-12))
    sx = max([v / scale_X[s] for s, v in sc["symplectic_X"].items()]
             + [v / scale_Z[s] for s, v in sc["symplectic_Z"].items()], default=0.0)
    out.append(CheckResult("symplecticity", sx <= 1e-10, sx, 1e-10))

    for ext in control_extents:
        plan = synthesize_control(rep, 1, ext, tolerance=tolerance, mode=mode)
        nfc = normalize(plan.controlled_representation(), 1, ext, tolerance=tolerance, mode=mode)
        A = nf.G_seq[1].norm()
        B = 8 * 3 * A
        ratio = max((nfc.Q_seq[s].norm() / (A * B ** (s - 1)) for s in range(2, ext + 1)), default=0.0)
        out.append(CheckResult(f"control_F{ext}_remainder", ratio <= 1e-10, ratio, 1e-10))

    X = GeneratingSequence(pmap.n_dof, {s: _random_field(rng, pmap.n_dof, s) for s in (1, 2, 3)}, 6)
    Y = GeneratingSequence(pmap.n_dof, {s: _random_field(rng, pmap.n_dof, s) for s in (1, 2, 3)}, 6)
    Z = compose_transforms(X, Y)
    g = _random_poly(rng, pmap.n_dof, 2)
    lhs = transform_apply(TruncatedTransform(X, "forward", 8), transform_apply(TruncatedTransform(Y, "forward", 8), g))
    rhs = transform_apply(TruncatedTransform(Z, "forward", 8), g)
    res = max((a_ - b_).max_abs() / max(1.0, a_.max_abs()) for a_, b_ in zip(lhs, rhs))
    out.append(CheckResult("composition", res <= 1e-10, res, 1e-10))
    return out
