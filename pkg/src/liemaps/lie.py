"""Lie derivatives, Lie transforms and their composition.

A generating sequence ``X = {X_s}`` defines the Lie transform
``T_X = sum_s E_s`` with ``E_0 = 1`` and
``E_s = sum_{j=1}^{s} (j/s) L_{X_j} E_{s-j}``.  By the exchange property,
``f(T_X z) = T_X f (z)``, so the near-identity change of coordinates is
obtained by applying ``T_X`` to the coordinate functions.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .polyalg import (
    COMPLEX,
    FrameError,
    HomogeneousPoly,
    PolyVectorField,
    _assemble,
    _raw_product,
)

Target = Union[HomogeneousPoly, PolyVectorField]

_CACHE_ENABLED = True


def set_cache_enabled(flag: bool) -> None:
    """Globally enable or disable E-term caching (results are identical)."""
    global _CACHE_ENABLED
    _CACHE_ENABLED = bool(flag)


def cache_enabled() -> bool:
    return _CACHE_ENABLED


@dataclass(frozen=True)
class Coordinates:
    """Stand-in for the coordinate functions ``(z_1, ..., z_2n)``."""

    n_dof: int
    frame: str = COMPLEX

    def as_field(self) -> PolyVectorField:
        return PolyVectorField([HomogeneousPoly.variable(self.n_dof, j, self.frame) for j in range(2 * self.n_dof)])


def _check_pair(X: PolyVectorField, target) -> None:
    if X.n_dof != target.n_dof:
        raise ValueError("n_dof mismatch")
    if X.frame != target.frame:
        raise FrameError(f"frame mismatch: {X.frame} vs {target.frame}")


def lie_derivative(X: PolyVectorField, target: Target) -> Target:
    """Lie derivative of a scalar polynomial or of a vector field along ``X``.

    Scalars: ``L_X f = sum_j X_j df/dz_j``.
    Fields: ``(L_X v)_j = sum_l (X_l dv_j/dz_l - v_l dX_j/dz_l)``.
    """
    _check_pair(X, target)
    nv = X.n_vars
    if isinstance(target, HomogeneousPoly):
        deg = target.degree + X.order
        if target.degree == 0:
            return HomogeneousPoly.zero(X.n_dof, max(deg, 0), X.frame)
        pieces = []
        scale = 0.0
        for j in range(nv):
            if X[j].is_zero():
                continue
            d = target.derivative(j)
            if d.is_zero():
                continue
            pieces.append(_raw_product(X[j], d))
            scale = max(scale, X[j].max_abs() * d.max_abs())
        return _assemble(X.n_dof, deg, X.frame, pieces, scale or None)
    if isinstance(target, PolyVectorField):
        deg = target.degree + X.order
        dv = [[c.derivative(l) for l in range(nv)] for c in target]
        dX = [[c.derivative(l) for l in range(nv)] for c in X]
        comps = []
        for j in range(nv):
            pieces = []
            scale = 0.0
            for l in range(nv):
                a, b = X[l], dv[j][l]
                if not (a.is_zero() or b.is_zero()):
                    pieces.append(_raw_product(a, b))
                    scale = max(scale, a.max_abs() * b.max_abs())
                a, b = target[l], dX[j][l]
                if not (a.is_zero() or b.is_zero()):
                    pieces.append(_raw_product(a, b, -1.0))
                    scale = max(scale, a.max_abs() * b.max_abs())
            comps.append(_assemble(X.n_dof, deg, X.frame, pieces, scale or None))
        return PolyVectorField(comps)
    raise TypeError(f"cannot take the Lie derivative of {type(target).__name__}")


def _zero_like(target: Target, extra_degree: int) -> Target:
    if isinstance(target, HomogeneousPoly):
        return HomogeneousPoly.zero(target.n_dof, target.degree + extra_degree, target.frame)
    return PolyVectorField.zero(target.n_dof, target.order + extra_degree, target.frame)


def _is_zero(t: Target) -> bool:
    return t.is_zero()


class TransformEngine:
    """Growable generator list with an E-term cache.

    Generators may be appended order by order (as in a normalization run);
    ``E(m, target)`` only needs ``X_1..X_m`` and stays valid afterwards.
    """

    def __init__(self, n_dof: int, frame: str = COMPLEX, generators: Mapping[int, PolyVectorField] | None = None,
                 cache: bool | None = None, closed: bool = False):
        self.n_dof = n_dof
        self.closed = closed
        self.frame = frame
        self._gens: list[PolyVectorField | None] = [None]
        self._cache: dict[int, tuple[object, list]] = {}
        self._lock = threading.RLock()
        self._use_cache = cache
        for s in sorted(generators or {}):
            self.set(s, generators[s])

    @property
    def known_order(self) -> int:
        return len(self._gens) - 1

    def set(self, s: int, X: PolyVectorField | None) -> None:
        """Define generator ``X_s``; orders must be supplied in ascending sequence."""
        with self._lock:
            while len(self._gens) < s:
                self._gens.append(None)
            if len(self._gens) != s:
                raise ValueError(f"generator of order {s} already defined")
            if X is not None:
                if X.order != s:
                    raise ValueError(f"generator at key {s} has order {X.order}")
                if X.n_dof != self.n_dof or X.frame != self.frame:
                    raise ValueError("generator n_dof/frame mismatch")
                if X.is_zero():
                    X = None
            self._gens.append(X)

    def generator(self, s: int) -> PolyVectorField | None:
        return self._gens[s] if s < len(self._gens) else None

    def E(self, m: int, target: Target) -> Target:
        """``E_m`` applied to a homogeneous target."""
        if m < 0:
            raise ValueError("order must be non-negative")
        if m == 0:
            return target
        if m > self.known_order and self.closed:
            with self._lock:
                while self.known_order < m:
                    self._gens.append(None)
        if m > self.known_order:
            raise ValueError(f"E_{m} needs generators through order {m}; only {self.known_order} known")
        use_cache = _CACHE_ENABLED if self._use_cache is None else self._use_cache
        if not use_cache:
            terms = [target]
            for s in range(1, m + 1):
                terms.append(self._next(terms, s, target))
            return terms[m]
        with self._lock:
            key = id(target)
            entry = self._cache.get(key)
            if entry is None or entry[0] is not target:
                entry = (target, [target])
                self._cache[key] = entry
            terms = entry[1]
            while len(terms) <= m:
                terms.append(self._next(terms, len(terms), target))
            return terms[m]

    def _next(self, terms, s, target):
        acc = None
        for j in range(1, s + 1):
            Xj = self._gens[j]
            prev = terms[s - j]
            if Xj is None or _is_zero(prev):
                continue
            piece = lie_derivative(Xj, prev)
            if j != s:
                piece = piece.scale(j / s)
            acc = piece if acc is None else acc + piece
        if acc is None:
            acc = _zero_like(target, s)
        got = acc.degree - target.degree
        assert got == s, f"E_{s} raised degree by {got}"
        return acc

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()


class GeneratingSequence:
    """Immutable graded family ``{X_s}`` of polynomial vector fields.

    Absent orders denote zero fields.  ``s_max`` is the truncation order.
    """

    def __init__(self, n_dof: int, entries: Mapping[int, PolyVectorField] | None = None, s_max: int | None = None,
                 frame: str = COMPLEX):
        entries = dict(entries or {})
        for s, X in entries.items():
            if s < 1:
                raise ValueError("generator orders start at 1")
            if X.order != s:
                raise ValueError(f"entry at key {s} has order {X.order}")
            if X.n_dof != n_dof:
                raise ValueError("n_dof mismatch")
            if X.frame != frame:
                raise FrameError(f"entry at key {s} is in the {X.frame} frame, expected {frame}")
        if s_max is None:
            s_max = max(entries, default=0)
        if entries and max(entries) > s_max:
            raise ValueError("entry beyond s_max")
        self.n_dof = n_dof
        self.frame = frame
        self.s_max = int(s_max)
        self._entries = {s: entries[s] for s in sorted(entries) if not entries[s].is_zero()}
        # generators beyond the last entry are zero
        self._engine = TransformEngine(n_dof, frame, self._entries, closed=True)

    @classmethod
    def empty(cls, n_dof, s_max, frame=COMPLEX):
        return cls(n_dof, {}, s_max, frame)

    @property
    def entries(self) -> dict[int, PolyVectorField]:
        return dict(self._entries)

    def __getitem__(self, s: int) -> PolyVectorField:
        if s in self._entries:
            return self._entries[s]
        return PolyVectorField.zero(self.n_dof, s, self.frame)

    def __contains__(self, s):
        return s in self._entries

    def orders(self) -> list[int]:
        return list(range(1, self.s_max + 1))

    def norms(self) -> dict[int, float]:
        return {s: self[s].norm() for s in self.orders()}

    def E(self, m: int, target: Target) -> Target:
        return self._engine.E(m, target)

    def truncated(self, s_max: int) -> "GeneratingSequence":
        return GeneratingSequence(self.n_dof, {s: X for s, X in self._entries.items() if s <= s_max}, s_max, self.frame)

    def extended(self, s_max: int) -> "GeneratingSequence":
        return GeneratingSequence(self.n_dof, self._entries, max(s_max, self.s_max), self.frame)

    def map_fields(self, fn) -> "GeneratingSequence":
        return GeneratingSequence(self.n_dof, {s: fn(X) for s, X in self._entries.items()}, self.s_max, self.frame)

    def __add__(self, other: "GeneratingSequence") -> "GeneratingSequence":
        s_max = max(self.s_max, other.s_max)
        return GeneratingSequence(self.n_dof, {s: self[s] + other[s] for s in range(1, s_max + 1)}, s_max, self.frame)

    def __neg__(self):
        return self.map_fields(lambda X: -X)

    def scale_graded(self, lam: float) -> "GeneratingSequence":
        """Multiply ``X_s`` by ``lam**s``."""
        return GeneratingSequence(self.n_dof, {s: X.scale(lam ** s) for s, X in self._entries.items()},
                                  self.s_max, self.frame)

    def is_zero(self) -> bool:
        return not self._entries

    def __repr__(self):
        return f"GeneratingSequence(n_dof={self.n_dof}, s_max={self.s_max}, orders={sorted(self._entries)})"

    def to_list(self) -> list:
        return [[s, self[s].to_dict()] for s in self.orders()]

    def to_json(self) -> str:
        return json.dumps({"n_dof": self.n_dof, "frame": self.frame, "s_max": self.s_max, "entries": self.to_list()},
                          sort_keys=True)

    @classmethod
    def from_list(cls, n_dof: int, data: Sequence, s_max=None, frame=COMPLEX) -> "GeneratingSequence":
        entries = {int(s): PolyVectorField.from_dict(d) for s, d in data}
        return cls(n_dof, entries, s_max, frame)

    @classmethod
    def from_json(cls, text: str) -> "GeneratingSequence":
        d = json.loads(text)
        return cls.from_list(d["n_dof"], d["entries"], d["s_max"], d["frame"])


def apply_E(sequence: GeneratingSequence, s: int, target: Target) -> Target:
    """``E_s`` of the Lie transform generated by ``sequence`` applied to ``target``."""
    return sequence.E(s, target)


@dataclass(frozen=True)
class TruncatedTransform:
    """Lie transform ``T_X`` (or its inverse) truncated at a maximum degree.

    ``trunc_order`` is the largest polynomial degree retained in results.
    """

    generator: GeneratingSequence
    direction: str = "forward"
    trunc_order: int = 0

    def __post_init__(self):
        if self.direction not in ("forward", "inverse"):
            raise ValueError("direction must be 'forward' or 'inverse'")

    def inverted(self) -> "TruncatedTransform":
        return TruncatedTransform(self.generator, "inverse" if self.direction == "forward" else "forward",
                                  self.trunc_order)


def _as_graded(target) -> list:
    if isinstance(target, (HomogeneousPoly, PolyVectorField)):
        return [target]
    return [t for t in target if t is not None]


def _deg(t) -> int:
    return t.degree


def _collect(pieces: list, trunc: int) -> list:
    """Sum pieces of equal degree and return them sorted by degree."""
    by_deg: dict[int, object] = {}
    for p in pieces:
        d = _deg(p)
        if d > trunc:
            continue
        by_deg[d] = p if d not in by_deg else by_deg[d] + p
    return [by_deg[d] for d in sorted(by_deg)]


def _forward(seq: GeneratingSequence, graded: list, trunc: int) -> list:
    out = []
    for t in graded:
        for m in range(0, trunc - _deg(t) + 1):
            out.append(seq.E(m, t))
    return _collect(out, trunc)


def _inverse(seq: GeneratingSequence, graded: list, trunc: int) -> list:
    out = []
    for g in graded:
        h = [g]
        for m in range(1, trunc - _deg(g) + 1):
            acc = _zero_like(g, m)
            for i in range(1, m + 1):
                acc = acc - seq.E(i, h[m - i])
            h.append(acc)
        out.extend(h)
    return _collect(out, trunc)


def transform_apply(T: TruncatedTransform, target) -> list:
    """Apply the transform to a polynomial, a vector field, coordinates or a graded list.

    Returns the degree-graded list of homogeneous pieces up to ``T.trunc_order``.
    With :class:`Coordinates` as target the result is the near-identity
    change of variables ``z -> T_X z`` as a list of vector-valued pieces.
    """
    if isinstance(target, Coordinates):
        return _apply_componentwise(T, [HomogeneousPoly.variable(target.n_dof, j, target.frame)
                                        for j in range(2 * target.n_dof)])
    graded = _as_graded(target)
    if graded and T.trunc_order < min(_deg(t) for t in graded):
        raise ValueError("trunc_order is below the degree of the target")
    if T.direction == "forward":
        return _forward(T.generator, graded, T.trunc_order)
    return _inverse(T.generator, graded, T.trunc_order)


def _apply_componentwise(T: TruncatedTransform, scalars: list) -> list:
    """Apply ``T`` to each scalar and pack equal degrees into vector-valued pieces."""
    n_dof, frame = scalars[0].n_dof, scalars[0].frame
    per_comp = [{p.degree: p for p in transform_apply(T, f)} for f in scalars]
    degrees = sorted(set().union(*per_comp))
    return [PolyVectorField([c.get(d, HomogeneousPoly.zero(n_dof, d, frame)) for c in per_comp]) for d in degrees]


def transform_inverse_apply(T: TruncatedTransform, target) -> list:
    """Apply the inverse of ``T``, solved order by order."""
    return transform_apply(T.inverted(), target)


def compose_transforms(X: GeneratingSequence, Y: GeneratingSequence) -> GeneratingSequence:
    """Generating sequence ``Z`` with ``T_Z f = T_X (T_Y f)``."""
    if X.n_dof != Y.n_dof or X.frame != Y.frame:
        raise ValueError("sequences must share n_dof and frame")
    if X.s_max != Y.s_max:
        raise ValueError("sequences must share s_max")
    entries = {}
    for s in range(1, X.s_max + 1):
        acc = X[s] + Y[s]
        for j in range(1, s):
            if j in Y:
                acc = acc + X.E(s - j, Y[j]).scale(j / s)
        entries[s] = acc
    return GeneratingSequence(X.n_dof, entries, X.s_max, X.frame)


def graded_sum_eval(pieces: list, points) -> np.ndarray:
    """Evaluate a graded list of scalar or vector pieces at points."""
    pts = np.atleast_2d(np.asarray(points))
    total = None
    for p in pieces:
        v = p(pts)
        total = v if total is None else total + v
    return total
