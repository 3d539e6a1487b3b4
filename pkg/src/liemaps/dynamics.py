"""Iteration, dynamical aperture and level curves of the normal-form invariants."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lie import Coordinates, GeneratingSequence, TruncatedTransform, transform_apply
from .maps import PolyMap, henon_step, is_henon
from .normalform import NormalFormResult
from .polyalg import COMPLEX, points_to_complex, points_to_real

OVERFLOW = 1e6


# -- iteration ---------------------------------------------------------------------

@dataclass
class OrbitSummary:
    survived: bool
    escape_time: int | None
    final_point: np.ndarray


def _stepper(pmap: PolyMap, exact: bool = True):
    if exact and is_henon(pmap):
        w = pmap.rotation.omega[0]
        return lambda z: henon_step(z, w)
    real_map = pmap.in_frame("real")
    return real_map


def iterate_batch(pmap: PolyMap, z0, N: int, L: float, exact: bool = True):
    """Iterate many initial points; return ``(survived, escape_time, final)``.

    A point escapes at step ``t`` when any coordinate leaves ``[-L, L]`` or
    exceeds the overflow guard; ``escape_time`` is ``-1`` for survivors and
    ``final`` holds the last point inside the region.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if not L > 0:
        raise ValueError("L must be positive")
    z = np.array(np.atleast_2d(np.asarray(z0, dtype=float)), dtype=float)
    m = z.shape[0]
    esc = np.full(m, -1, dtype=np.int64)
    final = z.copy()
    if m == 0:
        return np.zeros(0, dtype=bool), esc, final
    step = _stepper(pmap, exact)
    out0 = np.any(np.abs(z) > L, axis=1)
    esc[out0] = 0
    active = np.nonzero(~out0)[0]
    cur = z[active]
    guard = min(OVERFLOW, np.inf)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, N + 1):
            if active.size == 0:
                break
            nxt = step(cur)
            if np.iscomplexobj(nxt):
                nxt = nxt.real
            bad = ~np.all(np.abs(nxt) <= L, axis=1) | ~np.all(np.abs(nxt) <= guard, axis=1)
            if bad.any():
                gone = active[bad]
                esc[gone] = t
                final[gone] = cur[bad]
                keep = ~bad
                active = active[keep]
                cur = nxt[keep]
            else:
                cur = nxt
    final[active] = cur
    return esc < 0, esc, final


def iterate(pmap: PolyMap, z0, N: int, L: float, exact: bool = True) -> OrbitSummary:
    """Iterate one point; see :func:`iterate_batch`."""
    surv, esc, fin = iterate_batch(pmap, np.atleast_2d(z0), N, L, exact)
    return OrbitSummary(bool(surv[0]), None if esc[0] < 0 else int(esc[0]), fin[0])


# -- dynamical aperture -------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Cell-centred uniform grid on ``[-half_side, half_side]^2``."""

    half_side: float
    nx: int
    ny: int

    @classmethod
    def from_count(cls, n_points: int, half_side: float) -> "GridSpec":
        side = int(round(math.sqrt(n_points))) if n_points > 0 else 0
        return cls(half_side, side, side)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def axes(self):
        L = self.half_side
        xs = -L + (np.arange(self.nx) + 0.5) * (2 * L / self.nx) if self.nx else np.zeros(0)
        ys = -L + (np.arange(self.ny) + 0.5) * (2 * L / self.ny) if self.ny else np.zeros(0)
        return xs, ys

    def points(self) -> np.ndarray:
        """Grid points in row-major order (``y`` slow, ``x`` fast)."""
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass
class ApertureResult:
    grid: GridSpec
    N: int
    L: float
    escape_time: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        """Survival mask of shape ``(ny, nx)``."""
        return (self.escape_time < 0).reshape(self.grid.ny, self.grid.nx)

    @property
    def survivors(self) -> np.ndarray:
        return self.grid.points()[self.escape_time < 0]

    def to_csv(self) -> str:
        pts = self.grid.points()
        lines = ["x,y,survived,escape_time"]
        for (x, y), t in zip(pts, self.escape_time):
            lines.append(f"{x:.17g},{y:.17g},{int(t < 0)},{'' if t < 0 else int(t)}")
        return "\n".join(lines) + "\n"


def resolve_workers(workers: int) -> int:
    return max(1, os.cpu_count() or 1) if workers in (0, None) else int(workers)


def dynamical_aperture(pmap: PolyMap, grid: GridSpec, N: int, L: float | None = None, workers: int = 1,
                       exact: bool = True) -> ApertureResult:
    """Escape-time scan of a grid of initial conditions (``x`` plane for ``n = 1``)."""
    if pmap.n_dof != 1:
        raise ValueError("the grid scan covers the phase plane of one degree of freedom")
    L = grid.half_side if L is None else L
    if grid.half_side > L:
        raise ValueError("grid does not fit in the escape square")
    pts = grid.points()
    workers = resolve_workers(workers)
    if pts.shape[0] == 0:
        return ApertureResult(grid, N, L, np.zeros(0, dtype=np.int64))
    chunks = np.array_split(np.arange(pts.shape[0]), min(workers, pts.shape[0]))
    if len(chunks) == 1:
        esc = iterate_batch(pmap, pts, N, L, exact)[1]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(lambda idx: iterate_batch(pmap, pts[idx], N, L, exact)[1], chunks))
        esc = np.concatenate(parts)
    return ApertureResult(grid, N, L, esc)


# -- level curves -------------------------------------------------------------------

def coordinate_change(nf: NormalFormResult, r_used: int, inverse: bool = False) -> list:
    """Graded pieces of ``z = T_{X^(r_used)} z'`` (or its inverse) through degree ``r_used + 1``."""
    cache = nf.__dict__.setdefault("_coordinate_change", {})
    key = (r_used, inverse)
    if key not in cache:
        T = nf.transform(r_used)
        if inverse:
            T = T.inverted()
        cache[key] = transform_apply(T, Coordinates(nf.rotation.n_dof, COMPLEX))
    return cache[key]


def _eval_pieces(pieces, pts_c):
    out = np.zeros_like(pts_c)
    for p in pieces:
        out = out + p(pts_c)
    return out


def apply_coordinate_change(nf: NormalFormResult, r_used: int, points, inverse: bool = False) -> np.ndarray:
    """Map real points through the truncated normalizing change (or its inverse)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if r_used == 0:
        return pts.copy()
    zc = _eval_pieces(coordinate_change(nf, r_used, inverse), points_to_complex(pts))
    return points_to_real(zc).real


def self_intersects(poly: np.ndarray) -> bool:
    """Exact test for crossings between non-adjacent segments of a closed polyline."""
    P = np.asarray(poly, dtype=float)
    if np.allclose(P[0], P[-1]):
        P = P[:-1]
    n = P.shape[0]
    if n < 4:
        return False
    A = P
    B = np.roll(P, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]

    def orient(p, q, r):
        return (q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0])

    a, b, c, d = A[i], B[i], A[j], B[j]
    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    proper = (np.sign(o1) * np.sign(o2) < 0) & (np.sign(o3) * np.sign(o4) < 0)
    if proper.any():
        return True

    def on_seg(p, q, r):
        return ((np.minimum(p[:, 0], q[:, 0]) <= r[:, 0]) & (r[:, 0] <= np.maximum(p[:, 0], q[:, 0]))
                & (np.minimum(p[:, 1], q[:, 1]) <= r[:, 1]) & (r[:, 1] <= np.maximum(p[:, 1], q[:, 1])))

    touch = ((o1 == 0) & on_seg(a, b, c)) | ((o2 == 0) & on_seg(a, b, d)) \
        | ((o3 == 0) & on_seg(c, d, a)) | ((o4 == 0) & on_seg(c, d, b))
    return bool(touch.any())


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete Hausdorff distance between two point sets."""
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


@dataclass
class LevelCurve:
    rho: float
    r: int
    samples: np.ndarray
    self_intersecting: bool
    max_deviation: float

    def to_csv(self) -> str:
        lines = ["rho,r,x,y"]
        for x, y in self.samples:
            lines.append(f"{self.rho:.17g},{self.r},{x:.17g},{y:.17g}")
        return "\n".join(lines) + "\n"

    def contains(self, points) -> np.ndarray:
        """Even-odd point-in-polygon test against the closed polyline."""
        pts = np.atleast_2d(points)
        P = self.samples[:-1]
        Q = np.roll(P, -1, axis=0)
        x, y = pts[:, 0:1], pts[:, 1:2]
        cond = (P[None, :, 1] > y) != (Q[None, :, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = P[None, :, 0] + (y - P[None, :, 1]) * (Q[None, :, 0] - P[None, :, 0]) / (Q[None, :, 1] - P[None, :, 1])
        crossings = cond & (x < xint)
        return (crossings.sum(axis=1) % 2) == 1


def level_curve(nf: NormalFormResult, rho: float, r_used: int, n_samples: int = 512) -> LevelCurve:
    """Image of the circle ``x'^2 + y'^2 = rho^2`` under ``z = T_{X^(r_used)} z'``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if n_samples < 64:
        raise ValueError("need at least 64 samples")
    if r_used > nf.order_r:
        raise ValueError(f"r_used={r_used} exceeds the normalization order {nf.order_r}")
    th = 2 * np.pi * np.arange(n_samples) / n_samples
    circle = rho * np.column_stack([np.cos(th), np.sin(th)])
    pts = apply_coordinate_change(nf, r_used, circle)
    pts = np.vstack([pts, pts[:1]])
    dev = float(np.max(np.abs(np.hypot(pts[:, 0], pts[:, 1]) - rho)))
    return LevelCurve(float(rho), int(r_used), pts, self_intersects(pts), dev)


# -- apparent convergence -----------------------------------------------------------

@dataclass
class ConvergenceScan:
    rho_list: list
    r_list: list
    threshold: float
    target_r: int
    loops: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)
    recommended_rho: float | None = None
    recommended_r: int | None = None

    def first_loop(self, rho) -> int | None:
        for r in self.r_list:
            if self.loops[(rho, r)]:
                return r
        return None

    def to_dict(self) -> dict:
        return {
            "rho_list": self.rho_list,
            "r_list": self.r_list,
            "threshold": self.threshold,
            "target_r": self.target_r,
            "table": [{"rho": rho, "r": r, "loop": self.loops[(rho, r)], "distance_to_previous":
                       self.distances.get((rho, r))} for rho in self.rho_list for r in self.r_list],
            "intervals": [{"rho": rho, "interval": list(self.intervals[rho]) if self.intervals[rho] else None}
                          for rho in self.rho_list],
            "recommended_rho": self.recommended_rho,
            "recommended_r": self.recommended_r,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def convergence_interval(r_list, loops, distances, threshold):
    """Interval of apparent convergence ``(r_start, r_end)`` or ``None``.

    Only orders before the first loop count.  ``r_end`` is the largest of them
    whose curve lies within ``threshold`` of its predecessor; the interval
    extends back over the consecutive close orders and includes the order
    preceding the first of them.
    """
    usable = []
    for r in r_list:
        if loops[r]:
            break
        usable.append(r)
    close = [idx > 0 and distances[r] < threshold for idx, r in enumerate(usable)]
    ends = [idx for idx, c in enumerate(close) if c]
    if not ends:
        return None
    end = ends[-1]
    start = end
    while start > 0 and close[start]:
        start -= 1
    return usable[start], usable[end]


def apparent_convergence_scan(nf: NormalFormResult, rho_list, r_list, target_r: int | None = None,
                              threshold: float = 0.02, n_samples: int = 512) -> ConvergenceScan:
    """Loop flags and successive curve distances over a grid of ``(rho, r)``.

    For every ``rho`` the interval of apparent convergence is computed by
    :func:`convergence_interval`; the recommended ``rho`` is the largest one
    whose interval contains ``target_r``.
    """
    r_list = sorted(int(r) for r in r_list)
    rho_list = sorted(float(p) for p in rho_list)
    target_r = r_list[len(r_list) // 2] if target_r is None else int(target_r)
    scan = ConvergenceScan(rho_list, r_list, threshold, target_r)
    for rho in rho_list:
        prev = None
        loops, dists = {}, {}
        for r in r_list:
            c = level_curve(nf, rho, r, n_samples)
            loops[r] = c.self_intersecting
            scan.loops[(rho, r)] = c.self_intersecting
            if prev is not None:
                dists[r] = hausdorff(c.samples, prev.samples)
                scan.distances[(rho, r)] = dists[r]
            prev = c
        scan.intervals[rho] = convergence_interval(r_list, loops, dists, threshold)
    for rho in rho_list:
        iv = scan.intervals[rho]
        if iv is not None and iv[0] <= target_r <= iv[1]:
            scan.recommended_rho = rho
            scan.recommended_r = target_r
    return scan


# -- invariant drift ----------------------------------------------------------------

@dataclass
class DriftResult:
    actions: np.ndarray
    drift: np.ndarray
    steps: int

    @property
    def max_drift(self) -> float:
        return float(self.drift.max()) if self.drift.size else 0.0


def invariant_drift(nf: NormalFormResult, pmap: PolyMap, z0, N: int, r_used: int | None = None,
                    exact: bool = True) -> DriftResult:
    """Actions of the orbit in normalized coordinates and their per-step change.

    Orbit points are pulled back through the inverse truncated change of
    coordinates; ``drift[t] = max_l |I_l(t+1) - I_l(t)|``.
    """
    r = nf.order_r if r_used is None else r_used
    z = np.atleast_2d(np.asarray(z0, dtype=float))
    step = _stepper(pmap, exact)
    orbit = [z[0]]
    cur = z
    for _ in range(N):
        cur = step(cur)
        if np.iscomplexobj(cur):
            cur = cur.real
        orbit.append(cur[0])
        if not np.all(np.isfinite(cur)) or np.any(np.abs(cur) > OVERFLOW):
            break
    orbit = np.array(orbit)
    normal = apply_coordinate_change(nf, r, orbit, inverse=True)
    n = nf.rotation.n_dof
    acts = 0.5 * (normal[:, :n] ** 2 + normal[:, n:] ** 2)
    drift = np.max(np.abs(np.diff(acts, axis=0)), axis=1) if len(acts) > 1 else np.zeros(0)
    return DriftResult(acts, drift, len(orbit) - 1)
