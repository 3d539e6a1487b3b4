"""Sparse homogeneous polynomials and polynomial vector fields in 2n variables.

Variables are ordered ``(x_1..x_n, y_1..y_n)`` in the real frame and
``(xi_1..xi_n, eta_1..eta_n)`` in the complex frame.  A polynomial stores its
exponent multi-indices as an integer array and its coefficients as a complex
array, sorted in descending lexicographic order (graded lex, since every term
has the same degree).

The complex frame is related to the real one by::

    x_l = (xi_l + i eta_l) / sqrt(2),    y_l = i (xi_l - i eta_l) / sqrt(2)

which diagonalizes the block rotation matrix of an elliptic fixed point.
"""
from __future__ import annotations

import contextlib
import contextvars
import json
import math
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

REAL = "real"
COMPLEX = "complex"
FRAMES = (REAL, COMPLEX)

_DROP = contextvars.ContextVar("liemaps_drop_tolerance", default=1e-16)


class FrameError(ValueError):
    """Raised when objects living in different coordinate frames are mixed."""


def get_drop_tolerance() -> float:
    return _DROP.get()


@contextlib.contextmanager
def drop_tolerance(tol: float):
    """Temporarily change the relative coefficient drop tolerance.

    Coefficients smaller than ``tol`` times the largest coefficient entering
    an operation are removed from its result.
    """
    if tol < 0:
        raise ValueError("drop tolerance must be non-negative")
    token = _DROP.set(float(tol))
    try:
        yield
    finally:
        _DROP.reset(token)


def _key_weights(n_vars: int, degree: int) -> np.ndarray | None:
    base = degree + 1
    if base ** n_vars >= 2**62:
        return None
    return base ** np.arange(n_vars - 1, -1, -1, dtype=np.int64)


def _canonical(n_vars, degree, exps, coeffs, scale=None, merge=True):
    """Merge duplicate monomials, drop negligible terms, sort descending."""
    if exps.shape[0] == 0:
        return np.zeros((0, n_vars), dtype=np.int64), np.zeros(0, dtype=complex)
    if merge:
        weights = _key_weights(n_vars, degree)
        if weights is not None:
            keys = exps @ weights
            _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        else:
            _, first, inv = np.unique(exps, axis=0, return_index=True, return_inverse=True)
        inv = inv.ravel()
        if len(first) < len(inv):
            re = np.bincount(inv, weights=coeffs.real, minlength=len(first))
            im = np.bincount(inv, weights=coeffs.imag, minlength=len(first))
            coeffs = re + 1j * im
        else:
            coeffs = coeffs[first]
        exps = exps[first]
        # ascending -> descending lex
        exps = exps[::-1]
        coeffs = coeffs[::-1]
    if scale is None:
        scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    mag = np.abs(coeffs)
    keep = mag > _DROP.get() * scale
    keep &= mag > 0.0
    if not keep.all():
        exps = exps[keep]
        coeffs = coeffs[keep]
    return np.ascontiguousarray(exps, dtype=np.int64), np.ascontiguousarray(coeffs, dtype=complex)


class HomogeneousPoly:
    """Homogeneous polynomial of fixed degree in ``2 * n_dof`` variables.

    Instances are immutable.  Use :meth:`from_terms` to build one from a
    ``{exponent_tuple: coefficient}`` mapping.
    """

    __slots__ = ("n_dof", "degree", "frame", "exps", "coeffs")

    def __init__(self, n_dof, degree, exps=None, coeffs=None, frame=COMPLEX, *, canonical=False, scale=None):
        if n_dof < 1:
            raise ValueError("n_dof must be positive")
        if degree < 0:
            raise ValueError("degree must be non-negative")
        if frame not in FRAMES:
            raise ValueError(f"unknown frame {frame!r}")
        n_vars = 2 * n_dof
        if exps is None:
            exps = np.zeros((0, n_vars), dtype=np.int64)
            coeffs = np.zeros(0, dtype=complex)
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, n_vars)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if exps.shape[0] != coeffs.shape[0]:
            raise ValueError("exponent and coefficient counts differ")
        if not canonical:
            if exps.size and (np.any(exps < 0) or np.any(exps.sum(axis=1) != degree)):
                raise ValueError(f"every monomial must have non-negative exponents summing to {degree}")
            exps, coeffs = _canonical(n_vars, degree, exps, coeffs, scale=scale)
        exps.setflags(write=False)
        coeffs.setflags(write=False)
        self.n_dof = int(n_dof)
        self.degree = int(degree)
        self.frame = frame
        self.exps = exps
        self.coeffs = coeffs

    # construction -----------------------------------------------------
    @classmethod
    def from_terms(cls, n_dof: int, terms: Mapping[Sequence[int], complex], frame=COMPLEX, degree=None):
        if degree is None:
            if not terms:
                raise ValueError("degree is required for an empty term map")
            degree = sum(next(iter(terms)))
        exps = np.array([tuple(k) for k in terms], dtype=np.int64).reshape(-1, 2 * n_dof)
        coeffs = np.array(list(terms.values()), dtype=complex)
        return cls(n_dof, degree, exps, coeffs, frame)

    @classmethod
    def zero(cls, n_dof, degree, frame=COMPLEX):
        return cls(n_dof, degree, frame=frame, canonical=True)

    @classmethod
    def variable(cls, n_dof, index, frame=COMPLEX):
        """The coordinate function ``z_index`` (0-based)."""
        e = np.zeros((1, 2 * n_dof), dtype=np.int64)
        e[0, index] = 1
        return cls(n_dof, 1, e, [1.0], frame, canonical=True)

    @classmethod
    def monomial(cls, n_dof, exponent, coeff=1.0, frame=COMPLEX):
        exponent = tuple(int(e) for e in exponent)
        return cls(n_dof, sum(exponent), [exponent], [coeff], frame)

    # introspection ----------------------------------------------------
    @property
    def n_vars(self) -> int:
        return 2 * self.n_dof

    @property
    def terms(self) -> dict[tuple[int, ...], complex]:
        return {tuple(int(v) for v in e): complex(c) for e, c in zip(self.exps, self.coeffs)}

    def coefficient(self, exponent) -> complex:
        e = np.asarray(exponent, dtype=np.int64)
        hit = np.nonzero((self.exps == e).all(axis=1))[0]
        return complex(self.coeffs[hit[0]]) if hit.size else 0j

    def __len__(self):
        return self.coeffs.shape[0]

    def is_zero(self) -> bool:
        return self.coeffs.shape[0] == 0

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if len(self) else 0.0

    def norm(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def __repr__(self):
        return f"HomogeneousPoly(n_dof={self.n_dof}, degree={self.degree}, frame={self.frame}, nterms={len(self)})"

    # arithmetic -------------------------------------------------------
    def _check(self, other, same_degree=True):
        if not isinstance(other, HomogeneousPoly):
            raise TypeError(f"expected HomogeneousPoly, got {type(other).__name__}")
        if other.n_dof != self.n_dof:
            raise ValueError("n_dof mismatch")
        if other.frame != self.frame:
            raise FrameError(f"frame mismatch: {self.frame} vs {other.frame}")
        if same_degree and other.degree != self.degree:
            raise ValueError(f"degree mismatch: {self.degree} vs {other.degree}")

    def __add__(self, other):
        self._check(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        return _assemble(self.n_dof, self.degree, self.frame,
                         [(self.exps, self.coeffs), (other.exps, other.coeffs)],
                         max(self.max_abs(), other.max_abs()))

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return HomogeneousPoly(self.n_dof, self.degree, self.exps, -self.coeffs, self.frame, canonical=True)

    def scale(self, c) -> "HomogeneousPoly":
        c = complex(c)
        if c == 0 or self.is_zero():
            return HomogeneousPoly.zero(self.n_dof, self.degree, self.frame)
        return HomogeneousPoly(self.n_dof, self.degree, self.exps, self.coeffs * c, self.frame, canonical=True)

    def __mul__(self, other):
        if isinstance(other, HomogeneousPoly):
            self._check(other, same_degree=False)
            deg = self.degree + other.degree
            if self.is_zero() or other.is_zero():
                return HomogeneousPoly.zero(self.n_dof, deg, self.frame)
            return _assemble(self.n_dof, deg, self.frame, [_raw_product(self, other)],
                             self.max_abs() * other.max_abs())
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return NotImplemented

    def derivative(self, index: int) -> "HomogeneousPoly":
        """Partial derivative with respect to variable ``index`` (0-based)."""
        if not 0 <= index < self.n_vars:
            raise IndexError(f"variable index {index} out of range")
        new_deg = max(self.degree - 1, 0)
        if self.degree == 0 or self.is_zero():
            return HomogeneousPoly.zero(self.n_dof, new_deg, self.frame)
        mask = self.exps[:, index] > 0
        exps = self.exps[mask].copy()
        coeffs = self.coeffs[mask] * exps[:, index]
        exps[:, index] -= 1
        return HomogeneousPoly(self.n_dof, new_deg, exps, coeffs, self.frame, canonical=True)

    def __eq__(self, other):
        if not isinstance(other, HomogeneousPoly):
            return NotImplemented
        return (self.n_dof == other.n_dof and self.degree == other.degree and self.frame == other.frame
                and np.array_equal(self.exps, other.exps) and np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def allclose(self, other, atol=1e-13) -> bool:
        return (self - other).max_abs() <= atol

    # evaluation ---------------------------------------------------------
    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points))
        if self.is_zero():
            return np.zeros(pts.shape[0], dtype=complex)
        mon = np.prod(pts[:, None, :] ** self.exps[None, :, :], axis=-1)
        return mon @ self.coeffs

    def with_frame(self, frame):
        """Relabel without changing coefficients (internal use)."""
        return HomogeneousPoly(self.n_dof, self.degree, self.exps, self.coeffs, frame, canonical=True)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n_dof": self.n_dof,
            "degree": self.degree,
            "frame": self.frame,
            "terms": [[[int(v) for v in e], [float(c.real), float(c.imag)]]
                      for e, c in zip(self.exps, self.coeffs)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "HomogeneousPoly":
        n_dof = int(data["n_dof"])
        terms = data.get("terms", [])
        exps = np.array([t[0] for t in terms], dtype=np.int64).reshape(-1, 2 * n_dof)
        coeffs = np.array([complex(t[1][0], t[1][1]) for t in terms], dtype=complex)
        return cls(n_dof, int(data["degree"]), exps, coeffs, data.get("frame", COMPLEX))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _raw_product(a: HomogeneousPoly, b: HomogeneousPoly, factor=1.0):
    exps = (a.exps[:, None, :] + b.exps[None, :, :]).reshape(-1, a.n_vars)
    coeffs = np.multiply.outer(a.coeffs, b.coeffs).reshape(-1)
    if factor != 1.0:
        coeffs = coeffs * factor
    return exps, coeffs


def _assemble(n_dof, degree, frame, pieces, scale=None) -> HomogeneousPoly:
    """Build a polynomial from a list of raw ``(exps, coeffs)`` pieces."""
    pieces = [p for p in pieces if p[1].shape[0]]
    n_vars = 2 * n_dof
    if not pieces:
        return HomogeneousPoly.zero(n_dof, degree, frame)
    exps = np.concatenate([p[0] for p in pieces]) if len(pieces) > 1 else pieces[0][0]
    coeffs = np.concatenate([p[1] for p in pieces]) if len(pieces) > 1 else pieces[0][1]
    if scale is None:
        scale = float(np.max(np.abs(coeffs)))
    exps, coeffs = _canonical(n_vars, degree, exps, coeffs, scale=scale)
    return HomogeneousPoly(n_dof, degree, exps, coeffs, frame, canonical=True)


def poly_arith(a: HomogeneousPoly, b=None, kind: str = "add", *, index: int | None = None, factor=None):
    """Dispatch the basic polynomial operations by name.

    ``kind`` is one of ``add``, ``sub``, ``mul``, ``scale`` (uses ``factor``)
    and ``partial_derivative`` (uses the 1-based variable ``index``).
    """
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    if kind == "scale":
        return a.scale(factor if factor is not None else b)
    if kind == "partial_derivative":
        idx = index if index is not None else b
        if not 1 <= idx <= a.n_vars:
            raise IndexError(f"variable index must be in [1, {a.n_vars}]")
        return a.derivative(idx - 1)
    raise ValueError(f"unknown operation {kind!r}")


class PolyVectorField:
    """Vector field with ``2 * n_dof`` homogeneous components of equal degree.

    A field of *order* ``s`` has components of degree ``s + 1``.  Order 0
    (linear fields) is allowed so that coordinate maps can be stored too.
    """

    __slots__ = ("components", "hamiltonian")

    def __init__(self, components: Sequence[HomogeneousPoly], hamiltonian: bool | None = None):
        components = tuple(components)
        if not components:
            raise ValueError("a vector field needs components")
        first = components[0]
        if len(components) != first.n_vars:
            raise ValueError(f"expected {first.n_vars} components, got {len(components)}")
        for c in components[1:]:
            if c.n_dof != first.n_dof or c.degree != first.degree or c.frame != first.frame:
                raise ValueError("components must share n_dof, degree and frame")
        self.components = components
        self.hamiltonian = hamiltonian

    @classmethod
    def zero(cls, n_dof, order, frame=COMPLEX):
        z = HomogeneousPoly.zero(n_dof, order + 1, frame)
        return cls([z] * (2 * n_dof))

    @classmethod
    def from_terms(cls, n_dof, order, comp_terms: Sequence[Mapping], frame=COMPLEX):
        return cls([HomogeneousPoly.from_terms(n_dof, t, frame, degree=order + 1) for t in comp_terms])

    @property
    def n_dof(self) -> int:
        return self.components[0].n_dof

    @property
    def n_vars(self) -> int:
        return 2 * self.n_dof

    @property
    def degree(self) -> int:
        return self.components[0].degree

    @property
    def order(self) -> int:
        return self.degree - 1

    @property
    def frame(self) -> str:
        return self.components[0].frame

    def __getitem__(self, j) -> HomogeneousPoly:
        return self.components[j]

    def __iter__(self) -> Iterator[HomogeneousPoly]:
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def norm(self) -> float:
        return sum(c.norm() for c in self.components)

    def max_abs(self) -> float:
        return max(c.max_abs() for c in self.components)

    def _check(self, other):
        if not isinstance(other, PolyVectorField):
            raise TypeError(f"expected PolyVectorField, got {type(other).__name__}")
        if other.frame != self.frame:
            raise FrameError(f"frame mismatch: {self.frame} vs {other.frame}")

    def __add__(self, other):
        self._check(other)
        return PolyVectorField([a + b for a, b in zip(self, other)])

    def __sub__(self, other):
        self._check(other)
        return PolyVectorField([a - b for a, b in zip(self, other)])

    def __neg__(self):
        return PolyVectorField([-a for a in self], self.hamiltonian)

    def scale(self, c):
        return PolyVectorField([a.scale(c) for a in self], self.hamiltonian)

    def __mul__(self, c):
        if isinstance(c, (int, float, complex, np.number)):
            return self.scale(c)
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return all(a == b for a, b in zip(self, other)) and len(self) == len(other)

    __hash__ = None

    def allclose(self, other, atol=1e-13) -> bool:
        return (self - other).max_abs() <= atol

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points))
        return np.stack([c(pts) for c in self.components], axis=-1)

    def __repr__(self):
        return f"PolyVectorField(n_dof={self.n_dof}, order={self.order}, frame={self.frame}, nterms={[len(c) for c in self]})"

    def to_dict(self) -> dict:
        return {"n_dof": self.n_dof, "order": self.order, "frame": self.frame,
                "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PolyVectorField":
        return cls([HomogeneousPoly.from_dict(c) for c in data["components"]])


# -- coordinate frames --------------------------------------------------------

_SQ2 = math.sqrt(2.0)


def frame_matrix(n_dof: int, direction: str = "to_complex") -> np.ndarray:
    """Matrix expressing the *old* variables as linear forms in the *new* ones.

    For ``to_complex`` the rows give ``(x, y)`` in terms of ``(xi, eta)``;
    for ``to_real`` they give ``(xi, eta)`` in terms of ``(x, y)``.
    """
    eye = np.eye(n_dof)
    if direction == "to_complex":
        return np.block([[eye, 1j * eye], [1j * eye, eye]]) / _SQ2
    if direction == "to_real":
        return np.block([[eye, -1j * eye], [-1j * eye, eye]]) / _SQ2
    raise ValueError(direction)


def points_to_complex(points) -> np.ndarray:
    """Map real phase-space points ``(x, y)`` to complex coordinates ``(xi, eta)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    n = pts.shape[1] // 2
    return pts @ frame_matrix(n, "to_real").T


def points_to_real(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    n = pts.shape[1] // 2
    return pts @ frame_matrix(n, "to_complex").T


def substitute_linear(p: HomogeneousPoly, forms: np.ndarray, frame: str) -> HomogeneousPoly:
    """Return ``p(A w)`` where row ``i`` of ``forms`` writes old variable ``i`` in the new ones."""
    n_dof, nv = p.n_dof, p.n_vars
    if p.is_zero():
        return HomogeneousPoly.zero(n_dof, p.degree, frame)
    lin = []
    for i in range(nv):
        e = np.eye(nv, dtype=np.int64)
        lin.append(HomogeneousPoly(n_dof, 1, e, forms[i], frame))
    powers = [[HomogeneousPoly(n_dof, 0, np.zeros((1, nv), dtype=np.int64), [1.0], frame, canonical=True)]
              for _ in range(nv)]
    maxe = p.exps.max(axis=0)
    for i in range(nv):
        for _ in range(int(maxe[i])):
            powers[i].append(powers[i][-1] * lin[i])
    pieces = []
    for e, c in zip(p.exps, p.coeffs):
        term = None
        for i in range(nv):
            if e[i]:
                term = powers[i][e[i]] if term is None else term * powers[i][e[i]]
        pieces.append((term.exps, term.coeffs * c))
    return _assemble(n_dof, p.degree, frame, pieces, scale=p.max_abs())


def _convert(obj, target: str):
    if isinstance(obj, HomogeneousPoly):
        if obj.frame == target:
            raise FrameError(f"already in the {target} frame")
        direction = "to_complex" if target == COMPLEX else "to_real"
        return substitute_linear(obj, frame_matrix(obj.n_dof, direction), target)
    if isinstance(obj, PolyVectorField):
        if obj.frame == target:
            raise FrameError(f"already in the {target} frame")
        direction = "to_complex" if target == COMPLEX else "to_real"
        fwd = frame_matrix(obj.n_dof, direction)
        back = frame_matrix(obj.n_dof, "to_real" if target == COMPLEX else "to_complex")
        subs = [substitute_linear(c, fwd, target) for c in obj]
        comps = []
        for j in range(obj.n_vars):
            acc = [(s.exps, s.coeffs * back[j, k]) for k, s in enumerate(subs) if back[j, k] != 0]
            comps.append(_assemble(obj.n_dof, obj.degree, target, acc, scale=max(s.max_abs() for s in subs)))
        return PolyVectorField(comps, obj.hamiltonian)
    raise TypeError(f"cannot convert {type(obj).__name__}")


def to_complex(obj):
    """Express a real-frame polynomial or vector field in complex coordinates.

    Vector fields transform as push-forwards: ``v_c(w) = M^{-1} v(M w)``.
    """
    return _convert(obj, COMPLEX)


def to_real(obj):
    """Inverse of :func:`to_complex`."""
    return _convert(obj, REAL)


def in_frame(obj, frame):
    return obj if obj.frame == frame else _convert(obj, frame)


def poly_norm(obj) -> float:
    """Sum of coefficient moduli (summed over components for vector fields)."""
    return obj.norm()


# -- symplectic structure ------------------------------------------------------

def _inverse_symplectic(X: PolyVectorField) -> list[HomogeneousPoly]:
    # J = [[0, I], [-I, 0]], J^{-1} X = (-X_y, X_x)
    n = X.n_dof
    return [-X[n + l] for l in range(n)] + [X[l] for l in range(n)]


def symplecticity_check(X: PolyVectorField, tol: float = 1e-12) -> tuple[bool, float]:
    """Test whether ``X = J grad H`` for some scalar ``H``.

    The integrability conditions ``d_b G_a = d_a G_b`` of ``G = J^{-1} X`` are
    checked coefficient-wise.  Returns ``(ok, residual)`` where the residual is
    the largest violating coefficient modulus; ``ok`` compares it with ``tol``
    scaled by ``max(1, largest coefficient of X)``.
    """
    if X.n_vars % 2:
        raise ValueError("symplectic check needs an even number of variables")
    G = _inverse_symplectic(X)
    resid = 0.0
    for a in range(X.n_vars):
        for b in range(a + 1, X.n_vars):
            resid = max(resid, (G[a].derivative(b) - G[b].derivative(a)).max_abs())
    return resid <= tol * max(1.0, X.max_abs()), resid


def hamiltonian_field(H: HomogeneousPoly) -> PolyVectorField:
    """The field ``J grad H = (dH/dy, -dH/dx)``."""
    n = H.n_dof
    comps = [H.derivative(n + l) for l in range(n)] + [-H.derivative(l) for l in range(n)]
    return PolyVectorField(comps, hamiltonian=True)


def hamiltonian_of(X: PolyVectorField) -> HomogeneousPoly:
    """Generating function of a symplectic field (Euler's identity on ``J^{-1} X``)."""
    G = _inverse_symplectic(X)
    deg = X.degree + 1
    pieces = []
    for a, g in enumerate(G):
        za = HomogeneousPoly.variable(X.n_dof, a, X.frame)
        prod = g * za
        pieces.append((prod.exps, prod.coeffs / deg))
    return _assemble(X.n_dof, deg, X.frame, pieces)


def action(n_dof: int, l: int, frame=REAL) -> HomogeneousPoly:
    """The action ``I_l = (x_l^2 + y_l^2) / 2`` in the requested frame."""
    terms = {}
    e = [0] * (2 * n_dof)
    e[l] = 2
    terms[tuple(e)] = 0.5
    e = [0] * (2 * n_dof)
    e[n_dof + l] = 2
    terms[tuple(e)] = 0.5
    I = HomogeneousPoly.from_terms(n_dof, terms, REAL)
    return I if frame == REAL else to_complex(I)


def iter_nonzero(polys: Iterable[HomogeneousPoly]):
    return (p for p in polys if not p.is_zero())
