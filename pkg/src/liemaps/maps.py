"""Symplectic maps near an elliptic fixed point.

A map is stored as ``z' = Lambda (z + f_2(z) + ... + f_dmax(z))`` where
``Lambda`` is the rotation by the frequency vector ``omega``.  The same map
can be written through a generating sequence in two equivalent forms:

* ``R_then_T`` with generators ``V``:  ``z' = Lambda . Phi_V(z)``
* ``T_then_R`` with generators ``W``:  ``z' = Phi_W(Lambda z)``

where ``Phi_X(z) = T_X z`` is the near-identity change of coordinates of the
Lie transform.  The two are related by ``W_s = R_omega^{-1} V_s``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .lie import Coordinates, GeneratingSequence, TransformEngine, TruncatedTransform, lie_derivative, transform_apply
from .polyalg import (
    COMPLEX,
    REAL,
    FrameError,
    HomogeneousPoly,
    PolyVectorField,
    in_frame,
    substitute_linear,
    symplecticity_check,
)

FORMS = ("R_then_T", "T_then_R")


class SymplecticityWarning(UserWarning):
    """Emitted when an ingested map fails the symplecticity test."""


@dataclass(frozen=True)
class RotationSpec:
    """Linear part of the map: rotation by ``omega`` in each degree of freedom.

    In the complex frame the rotation is ``diag(exp(i sigma omega))`` with
    ``sigma = (-1, ..., -1, +1, ..., +1)``.
    """

    omega: tuple

    def __init__(self, omega):
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        if om.ndim != 1 or om.size == 0 or not np.all(np.isfinite(om)):
            raise ValueError("omega must be a non-empty vector of finite real frequencies")
        object.__setattr__(self, "omega", tuple(float(w) for w in om))

    @property
    def n_dof(self) -> int:
        return len(self.omega)

    @property
    def sigma(self) -> np.ndarray:
        n = self.n_dof
        return np.concatenate([-np.ones(n, dtype=int), np.ones(n, dtype=int)])

    @property
    def phases(self) -> np.ndarray:
        """Phase of each complex multiplier, ``sigma * (omega, omega)``."""
        om = np.asarray(self.omega)
        return self.sigma * np.concatenate([om, om])

    @property
    def multipliers(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    @property
    def mu(self) -> np.ndarray:
        """Extended frequency vector such that ``D_omega xi^j eta^k e_l`` has
        eigenvalue ``exp(i <k - j, omega> + i mu_l) - 1``.

        Derived from :func:`rotation_apply` on basis fields rather than assumed.
        """
        n = self.n_dof
        mu = -self.phases
        for l in range(2 * n):
            comps = [HomogeneousPoly.zero(n, 1) for _ in range(2 * n)]
            comps[l] = HomogeneousPoly.variable(n, l)
            factor = rotation_apply(self, PolyVectorField(comps))[l].coeffs[0]
            # the field z_l e_l has <k - j, omega> equal to the phase of its own multiplier
            if abs(factor - np.exp(1j * (self.phases[l] + mu[l]))) > 1e-14:
                raise AssertionError("extended frequency vector inconsistent with the rotation")
        return mu

    def real_matrix(self) -> np.ndarray:
        n = self.n_dof
        c = np.diag(np.cos(self.omega))
        s = np.diag(np.sin(self.omega))
        return np.block([[c, -s], [s, c]])

    def matrix(self, frame: str) -> np.ndarray:
        return self.real_matrix() if frame == REAL else np.diag(self.multipliers)

    def inverse(self) -> "RotationSpec":
        return RotationSpec([-w for w in self.omega])

    def to_dict(self) -> dict:
        return {"omega": list(self.omega)}


def _scalar_factor(R: RotationSpec, exps: np.ndarray) -> np.ndarray:
    return np.exp(1j * (exps @ R.phases))


def _rotate_complex(R: RotationSpec, target, inverse=False):
    sgn = -1.0 if inverse else 1.0
    if isinstance(target, HomogeneousPoly):
        if target.is_zero():
            return target
        return HomogeneousPoly(target.n_dof, target.degree, target.exps,
                               target.coeffs * np.exp(1j * sgn * (target.exps @ R.phases)), target.frame,
                               canonical=True)
    comps = []
    for l, c in enumerate(target):
        if c.is_zero():
            comps.append(c)
            continue
        ph = sgn * (c.exps @ R.phases - R.phases[l])
        comps.append(HomogeneousPoly(c.n_dof, c.degree, c.exps, c.coeffs * np.exp(1j * ph), c.frame, canonical=True))
    return PolyVectorField(comps, target.hamiltonian)


def _rotate_real(R: RotationSpec, target, inverse=False):
    lam = R.real_matrix()
    if inverse:
        lam = lam.T
    if isinstance(target, HomogeneousPoly):
        return substitute_linear(target, lam, REAL)
    subs = [substitute_linear(c, lam, REAL) for c in target]
    inv = lam.T
    comps = []
    for j in range(target.n_vars):
        acc = HomogeneousPoly.zero(target.n_dof, target.degree, REAL)
        for k, s in enumerate(subs):
            if inv[j, k] != 0:
                acc = acc + s.scale(inv[j, k])
        comps.append(acc)
    return PolyVectorField(comps, target.hamiltonian)


def _rotate(R: RotationSpec, target, inverse=False):
    if target.n_dof != R.n_dof:
        raise ValueError("n_dof mismatch between rotation and target")
    if target.frame == COMPLEX:
        return _rotate_complex(R, target, inverse)
    return _rotate_real(R, target, inverse)


def rotation_apply(R: RotationSpec, target, inverse: bool = False):
    """``(R f)(z) = f(Lambda z)`` for scalars and ``(R V)(z) = Lambda^{-1} V(Lambda z)`` for fields.

    Only the complex frame is accepted, where the action is diagonal on
    monomials.  ``inverse=True`` applies ``R^{-1}``.
    """
    if target.frame != COMPLEX:
        raise FrameError("rotation_apply works in the complex frame; convert the input first")
    return _rotate(R, target, inverse)


# -- polynomial maps -----------------------------------------------------------

class _Evaluator:
    """Vectorized evaluation of ``sum_d f_d(z)`` over a batch of points."""

    def __init__(self, n_dof: int, nonlinear: Mapping[int, PolyVectorField], real: bool):
        nv = 2 * n_dof
        rows = {}
        for d in sorted(nonlinear):
            for j, comp in enumerate(nonlinear[d]):
                for e, c in zip(comp.exps, comp.coeffs):
                    key = tuple(int(v) for v in e)
                    if key not in rows:
                        rows[key] = np.zeros(nv, dtype=complex)
                    rows[key][j] += c
        self.nv = nv
        self.exps = np.array(list(rows), dtype=np.int64).reshape(-1, nv)
        coef = np.array(list(rows.values()), dtype=complex).reshape(-1, nv)
        self.real = real
        self.coef = coef.real.copy() if real else coef
        self.maxe = self.exps.max(axis=0) if self.exps.size else np.zeros(nv, dtype=np.int64)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        # z: (N, nv)
        if self.exps.shape[0] == 0:
            return np.zeros_like(z)
        mon = np.ones((self.exps.shape[0], z.shape[0]), dtype=z.dtype)
        for v in range(self.nv):
            if self.maxe[v] == 0:
                continue
            pw = np.empty((int(self.maxe[v]) + 1, z.shape[0]), dtype=z.dtype)
            pw[0] = 1.0
            for k in range(1, int(self.maxe[v]) + 1):
                pw[k] = pw[k - 1] * z[:, v]
            mon *= pw[self.exps[:, v]]
        return (self.coef.T @ mon).T


class PolyMap:
    """Truncated polynomial map ``z' = Lambda (z + sum_{d=2}^{d_max} f_d(z))``.

    ``nonlinear`` maps each degree ``d >= 2`` to a vector-valued homogeneous
    polynomial, stored as a :class:`PolyVectorField` of order ``d - 1``.
    """

    def __init__(self, rotation: RotationSpec, nonlinear: Mapping[int, PolyVectorField] | None = None,
                 frame: str = REAL, name: str | None = None):
        nonlinear = dict(nonlinear or {})
        for d, f in nonlinear.items():
            if d < 2:
                raise ValueError("nonlinear terms start at degree 2 (fixed point at the origin)")
            if f.degree != d:
                raise ValueError(f"term at key {d} has degree {f.degree}")
            if f.n_dof != rotation.n_dof:
                raise ValueError("n_dof mismatch")
            if f.frame != frame:
                raise FrameError(f"term at degree {d} is in the {f.frame} frame, expected {frame}")
        self.rotation = rotation
        self.frame = frame
        self.name = name
        self.nonlinear = {d: nonlinear[d] for d in sorted(nonlinear) if not nonlinear[d].is_zero()}
        self._eval = None
        self._jac = None

    @property
    def n_dof(self) -> int:
        return self.rotation.n_dof

    @property
    def d_max(self) -> int:
        return max(self.nonlinear, default=1)

    def term(self, d: int) -> PolyVectorField:
        return self.nonlinear.get(d, PolyVectorField.zero(self.n_dof, d - 1, self.frame))

    def _real_coeffs(self) -> bool:
        if self.frame != REAL:
            return False
        return all(np.max(np.abs(c.coeffs.imag), initial=0.0) == 0.0 for f in self.nonlinear.values() for c in f)

    def _evaluator(self) -> _Evaluator:
        if self._eval is None:
            self._eval = _Evaluator(self.n_dof, self.nonlinear, self._real_coeffs())
        return self._eval

    def __call__(self, points) -> np.ndarray:
        """Apply the map to one point or an ``(N, 2n)`` batch."""
        pts = np.asarray(points)
        single = pts.ndim == 1
        z = np.atleast_2d(pts)
        ev = self._evaluator()
        if not ev.real or np.iscomplexobj(z):
            z = z.astype(complex)
        w = z + ev(z)
        out = w @ self.rotation.matrix(self.frame).T
        return out[0] if single else out

    def jacobian(self, points) -> np.ndarray:
        """Exact Jacobian matrices of the truncated map at a batch of points."""
        z = np.atleast_2d(np.asarray(points))
        nv = 2 * self.n_dof
        if self._jac is None:
            self._jac = [[_Evaluator(self.n_dof, {d - 1: PolyVectorField([f[j].derivative(k) for j in range(nv)])
                                                  for d, f in self.nonlinear.items()}, False)
                          for k in range(nv)]]
        J = np.zeros((z.shape[0], nv, nv), dtype=complex)
        for k in range(nv):
            J[:, :, k] = self._jac[0][k](z.astype(complex))
        J += np.eye(nv)
        lam = self.rotation.matrix(self.frame)
        return np.einsum("ij,njk->nik", lam, J)

    def in_frame(self, frame: str) -> "PolyMap":
        if frame == self.frame:
            return self
        return PolyMap(self.rotation, {d: in_frame(f, frame) for d, f in self.nonlinear.items()}, frame, self.name)

    def allclose(self, other: "PolyMap", atol=1e-11, through: int | None = None) -> bool:
        return self.max_difference(other, through) <= atol

    def max_difference(self, other: "PolyMap", through: int | None = None) -> float:
        if other.frame != self.frame:
            other = other.in_frame(self.frame)
        top = through if through is not None else max(self.d_max, other.d_max)
        diff = float(np.max(np.abs(np.subtract(self.rotation.omega, other.rotation.omega))))
        for d in range(2, top + 1):
            diff = max(diff, (self.term(d) - other.term(d)).max_abs())
        return diff

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "omega": list(self.rotation.omega),
            "frame": self.frame,
            "nonlinear": [{"degree": d, "components": [c.to_dict() for c in f]} for d, f in self.nonlinear.items()],
        }

    def __repr__(self):
        return f"PolyMap(name={self.name!r}, omega={self.rotation.omega}, d_max={self.d_max}, frame={self.frame})"


@dataclass(frozen=True)
class MapRepresentation:
    """Map written as ``R_then_T`` (generators ``V``) or ``T_then_R`` (generators ``W``)."""

    form: str
    rotation: RotationSpec
    generators: GeneratingSequence

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}")
        if self.generators.n_dof != self.rotation.n_dof:
            raise ValueError("n_dof mismatch")

    @property
    def frame(self) -> str:
        return self.generators.frame

    def converted(self, form: str) -> "MapRepresentation":
        """The same map in the other form (``W = R^{-1} V``)."""
        if form == self.form:
            return self
        inverse = form == "T_then_R"
        gens = self.generators.map_fields(lambda X: _rotate(self.rotation, X, inverse=inverse))
        return MapRepresentation(form, self.rotation, gens)

    def in_frame(self, frame: str) -> "MapRepresentation":
        if frame == self.frame:
            return self
        return MapRepresentation(self.form, self.rotation, _sequence_in_frame(self.generators, frame))

    def map_generators(self) -> GeneratingSequence:
        """Sequence ``G`` with ``M = Lambda . Phi_G`` (i.e. the ``V`` of the ``R_then_T`` form)."""
        return self.converted("R_then_T").generators


def _sequence_in_frame(seq: GeneratingSequence, frame: str) -> GeneratingSequence:
    if seq.frame == frame:
        return seq
    return GeneratingSequence(seq.n_dof, {s: in_frame(X, frame) for s, X in seq.entries.items()}, seq.s_max, frame)


def extract_generators(pmap: PolyMap, s_max: int, check_symplectic: bool = False) -> MapRepresentation:
    """Generating sequence ``V`` with ``Lambda . T_V z`` equal to ``pmap`` through degree ``s_max + 1``.

    Solved order by order: the degree ``s + 1`` part of ``T_V z`` is ``V_s``
    plus terms built from ``V_1..V_{s-1}``.
    """
    n, frame = pmap.n_dof, pmap.frame
    if s_max < 0:
        raise ValueError("s_max must be non-negative")
    coords = [HomogeneousPoly.variable(n, j, frame) for j in range(2 * n)]
    eng = TransformEngine(n, frame)
    entries = {}
    for s in range(1, s_max + 1):
        target = pmap.term(s + 1)
        comps = []
        for j in range(2 * n):
            acc = target[j]
            for i in range(1, s):
                Vi = eng.generator(i)
                if Vi is None:
                    continue
                inner = eng.E(s - i, coords[j])
                if inner.is_zero():
                    continue
                acc = acc - lie_derivative(Vi, inner).scale(i / s)
            comps.append(acc)
        Vs = PolyVectorField(comps)
        eng.set(s, Vs)
        if not Vs.is_zero():
            entries[s] = Vs
    seq = GeneratingSequence(n, entries, s_max, frame)
    rep = MapRepresentation("R_then_T", pmap.rotation, seq)
    if check_symplectic:
        for s, V in entries.items():
            ok, resid = symplecticity_check(V, tol=1e-10)
            if not ok:
                warnings.warn(f"map generator of order {s} fails the symplecticity test (residual {resid:.3g})",
                              SymplecticityWarning, stacklevel=2)
    return rep


def realize_map(rep: MapRepresentation, d_max: int, name: str | None = None) -> PolyMap:
    """Explicit polynomial map through degree ``d_max`` of a generator representation."""
    if d_max < 1:
        raise ValueError("d_max must be at least 1")
    n, frame = rep.rotation.n_dof, rep.frame
    seq = rep.generators
    T = TruncatedTransform(seq, "forward", d_max)
    pieces = {p.degree: p for p in transform_apply(T, Coordinates(n, frame)) if p.degree >= 2}
    if rep.form == "R_then_T":
        nonlinear = pieces
    else:
        # Phi_W(Lambda z) = Lambda (z + R P_d (z))
        nonlinear = {d: _rotate(rep.rotation, P) for d, P in pieces.items()}
    return PolyMap(rep.rotation, nonlinear, frame, name)


def henon_map(omega1: float) -> PolyMap:
    """The quadratic area-preserving map ``(x, y) -> Lambda (x, y + x^2)``."""
    R = RotationSpec([omega1])
    x = HomogeneousPoly.variable(1, 0, REAL)
    f2 = PolyVectorField([HomogeneousPoly.zero(1, 2, REAL), x * x])
    return PolyMap(R, {2: f2}, REAL, name="henon")


def henon_step(z: np.ndarray, omega1: float) -> np.ndarray:
    """Closed-form Hénon step on an ``(N, 2)`` array (used as the fast path)."""
    c, s = math.cos(omega1), math.sin(omega1)
    x = z[:, 0]
    y = z[:, 1] + x * x
    return np.stack([c * x - s * y, s * x + c * y], axis=1)


def is_henon(pmap: PolyMap) -> bool:
    """True when ``pmap`` is exactly the built-in quadratic map."""
    if pmap.n_dof != 1 or pmap.frame != REAL or set(pmap.nonlinear) != {2}:
        return False
    return pmap.max_difference(henon_map(pmap.rotation.omega[0])) == 0.0


def load_map(source) -> PolyMap:
    """Read a map from a JSON file path, JSON text or an already-parsed dict.

    Format: ``{"omega": [...], "frame": "real", "nonlinear": [{"degree": d,
    "components": [poly, ...]}]}`` where each poly is either the full
    polynomial object or a bare ``terms`` list.  A ``linear`` matrix may be
    given instead of ``omega``; it must have unit-modulus eigenvalues.
    """
    if isinstance(source, Mapping):
        data = dict(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        data = json.loads(text)
    if data.get("name") == "henon" and not data.get("nonlinear"):
        return henon_map(float(data["omega"][0]))
    frame = data.get("frame", REAL)
    if "linear" in data and "omega" not in data:
        M = np.asarray(data["linear"], dtype=float)
        ev = np.linalg.eigvals(M)
        if np.any(np.abs(np.abs(ev) - 1.0) > 1e-12):
            raise ValueError("linear part is not elliptic (multipliers off the unit circle)")
        omega = _omega_from_matrix(M)
    else:
        raw = data["omega"]
        omega = []
        for w in raw:
            if isinstance(w, (list, tuple)) or isinstance(w, complex):
                im = w[1] if isinstance(w, (list, tuple)) else w.imag
                if im != 0:
                    raise ValueError("complex frequency: hyperbolic fixed point rejected")
                w = w[0] if isinstance(w, (list, tuple)) else w.real
            omega.append(float(w))
    R = RotationSpec(omega)
    n = R.n_dof
    nonlinear = {}
    for entry in data.get("nonlinear", []):
        d = int(entry["degree"])
        comps = []
        for c in entry["components"]:
            if isinstance(c, Mapping):
                c = dict(c)
                c.setdefault("n_dof", n)
                c.setdefault("degree", d)
                c.setdefault("frame", frame)
                comps.append(HomogeneousPoly.from_dict(c))
            else:
                comps.append(HomogeneousPoly.from_dict({"n_dof": n, "degree": d, "frame": frame, "terms": c}))
        f = PolyVectorField(comps)
        nonlinear[d] = nonlinear[d] + f if d in nonlinear else f
    pmap = PolyMap(R, nonlinear, frame, data.get("name"))
    extract_generators(pmap, max(pmap.d_max - 1, 0), check_symplectic=True)
    return pmap


def _omega_from_matrix(M: np.ndarray) -> list[float]:
    n = M.shape[0] // 2
    if n == 1:
        return [float(math.atan2(M[1, 0], M[0, 0]))]
    c = np.diag(M[:n, :n])
    s = np.diag(M[n:, :n])
    R = RotationSpec(np.arctan2(s, c))
    if not np.allclose(R.real_matrix(), M, atol=1e-12):
        raise ValueError("linear part must be a block rotation diag(C, C) / diag(S, S)")
    return list(R.omega)
