"""Birkhoff normal form of a map near an elliptic fixed point and control terms.

The map is written ``M = Lambda . Phi_G`` with a generating sequence ``G``
in the complex frame.  A near-identity change ``Phi_X`` conjugates it to
``N = Lambda . Phi_Z``, i.e. ``M(Phi_X(z)) = Phi_X(N(z))``, where order by
order

    D X_s + Z_s = Psi_s,
    Psi_s = G_s + sum_{j<s} (j/s) (E^X_{s-j} G_j - E^Z_{s-j} R X_j),

and ``D = R - 1`` is diagonal on monomials.  Orders beyond ``r`` are not
normalized: ``X_s = 0`` and the remainder is ``Q_s = Psi_s``.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .lie import Coordinates, GeneratingSequence, TransformEngine, TruncatedTransform, transform_apply
from .maps import MapRepresentation, PolyMap, RotationSpec, realize_map, rotation_apply
from .polyalg import (
    COMPLEX,
    REAL,
    HomogeneousPoly,
    PolyVectorField,
    action,
    in_frame,
    symplecticity_check,
)

log = logging.getLogger(__name__)

RESONANCE_TOL = 1e-10
NEAR_RESONANCE_TOL = 1e-3


class ResonanceError(ArithmeticError):
    """A non-trivial resonance was met while normalizing in strict mode."""

    def __init__(self, message, monomials):
        super().__init__(message)
        self.monomials = monomials


class NearResonanceWarning(UserWarning):
    """A divisor is small but above the resonance tolerance."""


def _unit_field(field: PolyVectorField) -> PolyVectorField:
    return PolyVectorField([HomogeneousPoly(c.n_dof, c.degree, c.exps, np.ones(len(c)), c.frame, canonical=True)
                            for c in field])


def dw_eigenvalues(R: RotationSpec, field: PolyVectorField) -> list[np.ndarray]:
    """Eigenvalues of ``D = R - 1`` for every monomial stored in ``field``.

    Obtained by rotating a unit-coefficient copy of the field.
    """
    rot = rotation_apply(R, _unit_field(field))
    out = []
    for c, rc in zip(field, rot):
        # monomial sets coincide; rotation keeps the order
        out.append(rc.coeffs - 1.0 if len(rc) == len(c) else _lookup(rc, c) - 1.0)
    return out


def _lookup(rc: HomogeneousPoly, c: HomogeneousPoly) -> np.ndarray:
    return np.array([rc.coefficient(e) for e in c.exps])


def dw_eigenvalue(R: RotationSpec, monomial) -> complex:
    """Eigenvalue of ``D`` on ``xi^j eta^k e_l``; ``monomial = (j, k, l)`` with 1-based ``l``.

    ``j`` and ``k`` are exponent vectors of length ``n``.
    """
    j, k, l = monomial
    n = R.n_dof
    e = np.concatenate([np.asarray(j, dtype=np.int64).reshape(n), np.asarray(k, dtype=np.int64).reshape(n)])
    deg = int(e.sum())
    comps = [HomogeneousPoly.zero(n, deg) for _ in range(2 * n)]
    comps[l - 1] = HomogeneousPoly(n, deg, [e], [1.0])
    return complex(dw_eigenvalues(R, PolyVectorField(comps))[l - 1][0])


def frequency_vectors(n_dof: int, exps: np.ndarray, l: int) -> np.ndarray:
    """Integer vectors ``q`` with ``D``-eigenvalue ``exp(i <q, omega>) - 1`` (phase-sign convention of
    :class:`RotationSpec`)."""
    q = exps[:, n_dof:] - exps[:, :n_dof]
    q = q.copy()
    sign = -1 if l < n_dof else 1
    q[:, l % n_dof] -= sign
    return q


@dataclass
class ResonanceInfo:
    """Resonance bookkeeping collected while solving homological equations."""

    tolerance: float = RESONANCE_TOL
    mode: str = "strict"
    near_tolerance: float = NEAR_RESONANCE_TOL
    resonances: list = field(default_factory=list)
    near_resonances: list = field(default_factory=list)
    min_divisor: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("strict", "permissive"):
            raise ValueError("mode must be 'strict' or 'permissive'")
        if not self.tolerance > 0:
            raise ValueError("resonance tolerance must be positive")

    def resonance_module(self) -> list[tuple[int, ...]]:
        return sorted({tuple(q) for q in (r["q"] for r in self.resonances)})

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "mode": self.mode,
            "near_tolerance": self.near_tolerance,
            "resonance_module": [list(q) for q in self.resonance_module()],
            "near_resonances": self.near_resonances,
            "min_divisor": {str(k): v for k, v in sorted(self.min_divisor.items())},
        }


def solve_homological(R: RotationSpec, Psi: PolyVectorField, res: ResonanceInfo | None = None):
    """Split ``Psi`` into ``D X + Z`` with ``Z`` in the kernel of ``D``.

    Monomials whose divisor has modulus below ``res.tolerance`` go to ``Z``;
    the rest are divided by their eigenvalue into ``X``.  A resonance that is
    not forced by the integer structure (``q != 0``) raises
    :class:`ResonanceError` in strict mode.
    """
    if Psi.frame != COMPLEX:
        raise ValueError("homological equation is solved in the complex frame")
    res = res if res is not None else ResonanceInfo()
    n = Psi.n_dof
    eig = dw_eigenvalues(R, Psi)
    xs, zs = [], []
    bad = []
    min_div = np.inf
    for l, (c, lam) in enumerate(zip(Psi, eig)):
        if c.is_zero():
            xs.append(c)
            zs.append(c)
            continue
        mag = np.abs(lam)
        q = frequency_vectors(n, c.exps, l)
        kern = mag < res.tolerance
        accidental = kern & np.any(q != 0, axis=1)
        for idx in np.nonzero(accidental)[0]:
            rec = {"degree": c.degree, "component": l + 1, "exponent": c.exps[idx].tolist(),
                   "q": q[idx].tolist(), "divisor": float(mag[idx])}
            res.resonances.append(rec)
            bad.append(rec)
        near = (~kern) & (mag < res.near_tolerance)
        for idx in np.nonzero(near)[0]:
            rec = {"degree": c.degree, "component": l + 1, "exponent": c.exps[idx].tolist(),
                   "q": q[idx].tolist(), "divisor": float(mag[idx])}
            res.near_resonances.append(rec)
            warnings.warn(f"near resonance {rec}", NearResonanceWarning, stacklevel=2)
        rng = ~kern
        if rng.any():
            min_div = min(min_div, float(mag[rng].min()))
        xs.append(HomogeneousPoly(n, c.degree, c.exps[rng], c.coeffs[rng] / lam[rng], COMPLEX, canonical=True))
        zs.append(HomogeneousPoly(n, c.degree, c.exps[kern], c.coeffs[kern], COMPLEX, canonical=True))
    if bad and res.mode == "strict":
        raise ResonanceError(f"resonant monomials at degree {Psi.degree}: {bad}", bad)
    if np.isfinite(min_div):
        prev = res.min_divisor.get(Psi.order, np.inf)
        res.min_divisor[Psi.order] = min(prev, min_div)
    return PolyVectorField(xs), PolyVectorField(zs)


def apply_D(R: RotationSpec, X: PolyVectorField) -> PolyVectorField:
    """``D X = R X - X``."""
    return rotation_apply(R, X) - X


@dataclass
class NormalFormResult:
    """Output of :func:`normalize`.

    All sequences live in the complex frame.  ``psi[s]`` is the right member
    of the order-``s`` equation and ``residuals[s]`` the relative residual of
    ``D X_s + Z_s - Psi_s``.
    """

    order_r: int
    s_max: int
    rotation: RotationSpec
    G_seq: GeneratingSequence
    X_seq: GeneratingSequence
    Z_seq: GeneratingSequence
    Q_seq: GeneratingSequence
    psi: dict
    residuals: dict
    resonance: ResonanceInfo
    frame: str = COMPLEX

    @property
    def norms(self) -> dict:
        rows = {}
        for s in range(1, self.s_max + 1):
            rows[s] = {
                "X": self.X_seq[s].norm() if s <= self.order_r else 0.0,
                "Z": self.Z_seq[s].norm() if s <= self.order_r else 0.0,
                "Q": self.Q_seq[s].norm() if s > self.order_r else 0.0,
                "Psi": self.psi[s].norm(),
                "min_divisor": self.resonance.min_divisor.get(s, float("nan")),
            }
        return rows

    def full_Z(self) -> GeneratingSequence:
        """``Z_1..Z_r`` followed by the remainder ``Q_{r+1}..Q_{s_max}``."""
        entries = dict(self.Z_seq.entries)
        entries.update(self.Q_seq.entries)
        return GeneratingSequence(self.rotation.n_dof, entries, self.s_max, COMPLEX)

    def transform(self, r_used: int | None = None, trunc_order: int | None = None) -> TruncatedTransform:
        """Normalizing transform ``T_{X^(r_used)}``, truncated at degree ``r_used + 1`` by default."""
        r_used = self.order_r if r_used is None else r_used
        if r_used > self.order_r:
            raise ValueError(f"r_used={r_used} exceeds the normalization order {self.order_r}")
        seq = self.X_seq.truncated(r_used) if r_used < self.X_seq.s_max else self.X_seq
        return TruncatedTransform(seq, "forward", trunc_order if trunc_order is not None else r_used + 1)

    def to_dict(self) -> dict:
        return {
            "order_r": self.order_r,
            "s_max": self.s_max,
            "rotation": self.rotation.to_dict(),
            "frame": self.frame,
            "G": self.G_seq.to_list(),
            "X": self.X_seq.to_list(),
            "Z": self.Z_seq.to_list(),
            "Q": [[s, self.Q_seq[s].to_dict()] for s in range(self.order_r + 1, self.s_max + 1)],
            "norms": {str(s): v for s, v in self.norms.items()},
            "residuals": {str(s): v for s, v in sorted(self.residuals.items())},
            "resonance": self.resonance.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def norms_csv(self) -> str:
        lines = ["order,norm_X,norm_Z,norm_Q,norm_Psi,min_divisor"]
        for s, row in self.norms.items():
            lines.append(f"{s},{row['X']:.17g},{row['Z']:.17g},{row['Q']:.17g},{row['Psi']:.17g},"
                         f"{row['min_divisor']:.17g}")
        return "\n".join(lines) + "\n"


def _complex_generators(rep: MapRepresentation) -> GeneratingSequence:
    seq = rep.map_generators()
    if seq.frame != COMPLEX:
        seq = GeneratingSequence(seq.n_dof, {s: in_frame(X, COMPLEX) for s, X in seq.entries.items()},
                                 seq.s_max, COMPLEX)
    return seq


def _psi(s, G, Xeng, Zeng, RX):
    """Right member of the order-``s`` conjugation equation."""
    acc = G[s]
    for j in range(1, s):
        w = j / s
        if j in G:
            acc = acc + Xeng.E(s - j, G[j]).scale(w)
        if j in RX:
            acc = acc - Zeng.E(s - j, RX[j]).scale(w)
    return acc


def normalize(rep: MapRepresentation | GeneratingSequence, r: int, s_max: int | None = None,
              rotation: RotationSpec | None = None, *, tolerance: float = RESONANCE_TOL, mode: str = "strict",
              cache: bool | None = None) -> NormalFormResult:
    """Normalize the map to order ``r`` and compute the remainder through ``s_max``.

    ``rep`` may be a :class:`MapRepresentation` in either form, or directly the
    complex-frame sequence ``G`` of ``M = Lambda . Phi_G`` together with
    ``rotation``.
    """
    if isinstance(rep, MapRepresentation):
        R = rep.rotation
        G = _complex_generators(rep)
    else:
        if rotation is None:
            raise ValueError("rotation required when passing a bare generating sequence")
        R, G = rotation, rep
        if G.frame != COMPLEX:
            raise ValueError("generating sequence must be in the complex frame")
    s_max = r if s_max is None else s_max
    if r < 0 or s_max < r:
        raise ValueError("need 0 <= r <= s_max")
    n = R.n_dof
    res = ResonanceInfo(tolerance=tolerance, mode=mode)
    Xeng = TransformEngine(n, COMPLEX, cache=cache)
    Zeng = TransformEngine(n, COMPLEX, cache=cache)
    RX: dict[int, PolyVectorField] = {}
    Xs, Zs, Qs, psi, resid = {}, {}, {}, {}, {}
    for s in range(1, s_max + 1):
        P = _psi(s, G, Xeng, Zeng, RX)
        psi[s] = P
        if s <= r:
            X, Z = solve_homological(R, P, res)
            scale = P.norm()
            resid[s] = (apply_D(R, X) + Z - P).norm() / scale if scale else 0.0
            Xeng.set(s, X)
            Zeng.set(s, Z)
            if not X.is_zero():
                Xs[s] = X
                RX[s] = rotation_apply(R, X)
            if not Z.is_zero():
                Zs[s] = Z
        else:
            Xeng.set(s, None)
            Zeng.set(s, P)
            resid[s] = 0.0
            if not P.is_zero():
                Qs[s] = P
    return NormalFormResult(
        order_r=r, s_max=s_max, rotation=R, G_seq=G.truncated(s_max) if G.s_max > s_max else G.extended(s_max),
        X_seq=GeneratingSequence(n, Xs, r, COMPLEX), Z_seq=GeneratingSequence(n, Zs, r, COMPLEX),
        Q_seq=GeneratingSequence(n, Qs, s_max, COMPLEX), psi=psi, residuals=resid, resonance=res)


def structure_checks(nf: NormalFormResult) -> dict:
    """Kernel residuals, action invariance and symplecticity of ``X_s``, ``Z_s``."""
    R = nf.rotation
    out = {"kernel": {}, "action": {}, "symplectic_X": {}, "symplectic_Z": {}}
    actions = [action(R.n_dof, l, COMPLEX) for l in range(R.n_dof)]
    for s in range(1, nf.order_r + 1):
        Z = nf.Z_seq[s]
        out["kernel"][s] = apply_D(R, Z).norm() / Z.norm() if not Z.is_zero() else 0.0
        out["action"][s] = max(nf.Z_seq.E(s, I).max_abs() for I in actions)
        out["symplectic_X"][s] = symplecticity_check(nf.X_seq[s])[1]
        out["symplectic_Z"][s] = symplecticity_check(Z)[1]
    return out


# -- integrable approximant ----------------------------------------------------

@dataclass
class TwistData:
    """Action-dependent rotation of the truncated normal form.

    For each degree of freedom ``l`` the approximant acts as
    ``xi_l -> exp(-i omega_l) a_l(I) xi_l``; ``a[l][m]`` is the coefficient of
    ``I^m`` in ``a_l`` (``I`` the vector of actions, ``m`` a multi-index) and
    ``delta[l][m]`` that of the frequency shift ``delta_l = i log a_l``.
    """

    a: list
    delta: list

    def to_dict(self):
        conv = lambda d: [[list(k), [float(np.real(v)), float(np.imag(v))]] for k, v in sorted(d.items())]
        return {"a": [conv(d) for d in self.a], "delta": [conv(d) for d in self.delta]}


def _series_log(coeffs: dict, order: int, n: int) -> dict:
    """``log(1 + u)`` for a multivariate power series ``1 + u`` given as ``{multi_index: c}``."""
    zero = (0,) * n
    u = {k: v for k, v in coeffs.items() if k != zero}

    def mul(p, q):
        out = {}
        for k1, v1 in p.items():
            for k2, v2 in q.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                if sum(k) <= order:
                    out[k] = out.get(k, 0) + v1 * v2
        return out

    result = {}
    power = {zero: 1.0}
    for m in range(1, order + 1):
        power = mul(power, u)
        if not power:
            break
        for k, v in power.items():
            result[k] = result.get(k, 0) + ((-1) ** (m + 1)) * v / m
    return result


@dataclass
class IntegrableApproximant:
    """Truncated normalized map ``Lambda . Phi_Gamma`` with ``Gamma = {Z_1..Z_r}``."""

    map: PolyMap
    twist: TwistData
    order_r: int

    def action_change(self, points) -> np.ndarray:
        """``max_l |I_l(N z) - I_l(z)|`` with ``I . N`` expanded through degree ``r + 2``."""
        return self._action_poly_residual(points)

    def _action_poly_residual(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=complex))
        worst = np.zeros(pts.shape[0])
        for l, pieces in enumerate(self._action_images):
            val = sum(p(pts) for p in pieces)
            I = action(self.map.n_dof, l, self.map.frame)(pts)
            worst = np.maximum(worst, np.abs(val - I))
        return worst


def integrable_approximant(nf: NormalFormResult, frame: str = COMPLEX) -> IntegrableApproximant:
    """Realize the truncated normal form and extract its twist coefficients."""
    R, r, n = nf.rotation, nf.order_r, nf.rotation.n_dof
    gamma = nf.Z_seq
    rep = MapRepresentation("R_then_T", R, gamma)
    pmap = realize_map(rep, r + 1, name="normal_form")
    # xi_l -> T_Gamma xi_l = xi_l a_l(xi eta); (xi eta)^m = (-i I)^m in the action variables
    T = TruncatedTransform(gamma, "forward", r + 1)
    a_list, d_list = [], []
    order = r // 2
    for l in range(n):
        a = {}
        for piece in transform_apply(T, HomogeneousPoly.variable(n, l)):
            for e, c in zip(piece.exps, piece.coeffs):
                m = e[n:].copy()
                if e[l] != m[l] + 1 or np.any(np.delete(e[:n], l) != np.delete(m, l)):
                    raise AssertionError("normal form is not a twist")
                a[tuple(int(v) for v in m)] = a.get(tuple(int(v) for v in m), 0) + complex(c) * (-1j) ** int(m.sum())
        logs = _series_log(a, order, n)
        a_list.append(a)
        d_list.append({k: 1j * v for k, v in logs.items()})
    approx = IntegrableApproximant(pmap.in_frame(frame), TwistData(a_list, d_list), r)
    # I . N = T_Gamma R I = T_Gamma I; expand through degree r + 2
    images = []
    for l in range(n):
        I = action(n, l, COMPLEX)
        pieces = transform_apply(TruncatedTransform(gamma, "forward", r + 2), I)
        images.append([in_frame(p, frame) for p in pieces])
    approx._action_images = images
    return approx


# -- control -------------------------------------------------------------------

@dataclass
class ControlPlan:
    """Control terms ``F_{r+1}..F_{s_max}`` added to the map generators ``G``."""

    base_order_r: int
    s_max: int
    rotation: RotationSpec
    F_seq: GeneratingSequence
    G_seq: GeneratingSequence

    def controlled_sequence(self) -> GeneratingSequence:
        s_max = max(self.s_max, self.G_seq.s_max)
        return self.G_seq.extended(s_max) + self.F_seq.extended(s_max)

    def controlled_representation(self) -> MapRepresentation:
        return MapRepresentation("R_then_T", self.rotation, self.controlled_sequence())

    def controlled_map(self, d_max: int | None = None, frame: str = REAL) -> PolyMap:
        """Truncated polynomial realization (default degree ``s_max + 1``)."""
        d_max = self.s_max + 1 if d_max is None else d_max
        pm = realize_map(self.controlled_representation(), d_max, name="controlled").in_frame(frame)
        return _realify(pm) if frame == REAL else pm

    def norms(self) -> dict:
        return {s: self.F_seq[s].norm() for s in range(self.base_order_r + 1, self.s_max + 1)}

    def to_dict(self) -> dict:
        real = {s: in_frame(self.F_seq[s], REAL) for s in range(self.base_order_r + 1, self.s_max + 1)}
        return {
            "base_order_r": self.base_order_r,
            "s_max": self.s_max,
            "rotation": self.rotation.to_dict(),
            "F_complex": [[s, self.F_seq[s].to_dict()] for s in range(self.base_order_r + 1, self.s_max + 1)],
            "F_real": [[s, f.to_dict()] for s, f in real.items()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _realify(pm: PolyMap, tol: float = 1e-12) -> PolyMap:
    """Drop round-off imaginary parts of a real-frame map."""
    out = {}
    for d, f in pm.nonlinear.items():
        comps = []
        for c in f:
            if c.is_zero():
                comps.append(c)
                continue
            im = float(np.max(np.abs(c.coeffs.imag)))
            if im > tol * max(1.0, c.max_abs()):
                raise ValueError(f"real-frame map has complex coefficients at degree {d} ({im:.3g})")
            comps.append(HomogeneousPoly(c.n_dof, c.degree, c.exps, c.coeffs.real, REAL))
        out[d] = PolyVectorField(comps)
    return PolyMap(pm.rotation, out, REAL, pm.name)


def synthesize_control(rep: MapRepresentation, r: int, s_max: int, nf: NormalFormResult | None = None,
                       **kwargs) -> ControlPlan:
    """Control terms that cancel the remainder of the order-``r`` normal form through ``s_max``.

    ``F_s = -G_s - sum_{j<s} (j/s) (E^{X^(r)}_{s-j} G~_j - E^{Z^(r)}_{s-j} R X_j)`` for
    ``r < s <= s_max``, with ``G~_j = G_j + F_j`` and ``X^(r)``, ``Z^(r)``
    truncated at order ``r``.
    """
    if s_max < r:
        raise ValueError("s_max must be at least r")
    if nf is None or nf.order_r != r:
        nf = normalize(rep, r, r, **kwargs)
    R = nf.rotation
    n = R.n_dof
    G = _complex_generators(rep) if isinstance(rep, MapRepresentation) else rep
    G = G.extended(s_max)
    Xr = GeneratingSequence(n, nf.X_seq.entries, r, COMPLEX)
    Zr = GeneratingSequence(n, nf.Z_seq.entries, r, COMPLEX)
    RX = {j: rotation_apply(R, X) for j, X in Xr.entries.items()}
    Gt = dict(G.entries)
    F = {}
    for s in range(r + 1, s_max + 1):
        acc = -G[s]
        for j in range(1, s):
            w = j / s
            if j in Gt:
                acc = acc - Xr.E(s - j, Gt[j]).scale(w)
            if j in RX:
                acc = acc + Zr.E(s - j, RX[j]).scale(w)
        F[s] = acc
        Gt[s] = G[s] + acc
    return ControlPlan(r, s_max, R, GeneratingSequence(n, F, s_max, COMPLEX), G)


def conjugacy_residual(nf: NormalFormResult, pmap: PolyMap, points, r_used: int | None = None,
                       d_max: int | None = None) -> np.ndarray:
    """``|M(Phi_X(z)) - Phi_X(N(z))|`` at complex-frame points.

    ``M`` is evaluated as given, ``Phi_X`` through degree ``d_max`` and
    ``N = Lambda . Phi_Z`` with ``Z = {Z_1..Z_r}``.
    """
    r = nf.order_r if r_used is None else r_used
    d_max = r + 1 if d_max is None else d_max
    n = nf.rotation.n_dof
    phi = transform_apply(nf.transform(r, d_max), Coordinates(n, COMPLEX))
    gamma = GeneratingSequence(n, {s: Z for s, Z in nf.Z_seq.entries.items() if s <= r}, r, COMPLEX)
    N = realize_map(MapRepresentation("R_then_T", nf.rotation, gamma), d_max)
    Mc = pmap.in_frame(COMPLEX)
    pts = np.atleast_2d(np.asarray(points, dtype=complex))

    def Phi(z):
        return sum(p(z) for p in phi)

    return np.max(np.abs(Mc(Phi(pts)) - Phi(N(pts))), axis=1)
