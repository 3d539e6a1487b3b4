"""Small-divisor sequences and a priori norm bounds for the normal form."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .maps import RotationSpec
from .normalform import NormalFormResult


@dataclass
class DivisorTable:
    """``beta_s``, ``alpha_s = min(beta_1..beta_s)`` and ``T_r = T_{r-1} / alpha_r``.

    Lists are indexed by order; index 0 holds ``nan`` for ``beta``/``alpha``
    and ``T_0 = 1``.
    """

    beta: list
    alpha: list
    T: list
    diophantine_fit: tuple | None = None

    @property
    def s_max(self) -> int:
        return len(self.beta) - 1

    def to_csv(self) -> str:
        lines = ["order,beta,alpha,T"]
        for s in range(1, self.s_max + 1):
            lines.append(f"{s},{self.beta[s]:.17g},{self.alpha[s]:.17g},{self.T[s]:.17g}")
        return "\n".join(lines) + "\n"


def _compositions(total: int, parts: int):
    """Non-negative integer vectors of length ``parts`` summing to ``total``."""
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cut:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield out


def divisor_sequences(R: RotationSpec, s_max: int) -> DivisorTable:
    """Exhaustive smallest divisors over non-negative ``k`` with ``|k| = s + 1``.

    ``beta_s = min |exp(i <k, omega> +- i omega_j) - 1|`` over ``j`` and both
    signs, skipping combinations that vanish identically.
    """
    n = R.n_dof
    if n > 3:
        raise ValueError("exhaustive divisor enumeration is limited to n <= 3")
    om = np.asarray(R.omega)
    beta = [math.nan]
    for s in range(1, s_max + 1):
        ks = np.array(list(_compositions(s + 1, n)), dtype=np.int64)
        best = math.inf
        for j in range(n):
            for sign in (1, -1):
                q = ks.copy()
                q[:, j] += sign
                nonzero = np.any(q != 0, axis=1)
                d = np.abs(np.exp(1j * (q[nonzero] @ om)) - 1.0)
                if d.size:
                    best = min(best, float(d.min()))
        beta.append(best)
    alpha = [math.nan]
    T = [1.0]
    for s in range(1, s_max + 1):
        a = beta[s] if s == 1 else min(beta[s], alpha[s - 1])
        alpha.append(a)
        T.append(T[-1] / a)
    table = DivisorTable(beta, alpha, T)
    table.diophantine_fit = _fit(alpha)
    return table


def _fit(alpha) -> tuple | None:
    """Least-squares ``alpha_s ~ gamma / s^tau`` on the distinct values of the envelope (diagnostic only)."""
    s = np.arange(1, len(alpha))
    a = np.asarray(alpha[1:])
    if len(a) < 2:
        return None
    keep = np.concatenate([[True], a[1:] < a[:-1]])
    if keep.sum() < 2:
        return None
    slope, icpt = np.polyfit(np.log(s[keep]), np.log(a[keep]), 1)
    return float(math.exp(icpt)), float(-slope)


@dataclass
class EstimateReport:
    """Theoretical bounds against computed norms, order by order."""

    A: float
    C: float
    B: float
    frame: str
    rows: list = field(default_factory=list)

    @property
    def all_bounds_hold(self) -> bool:
        return all(row["holds"] for row in self.rows)

    def failures(self) -> list:
        return [row for row in self.rows if not row["holds"]]

    def to_csv(self) -> str:
        lines = ["order,quantity,bound,actual,ratio"]
        for row in self.rows:
            lines.append(f"{row['order']},{row['quantity']},{row['bound']:.17g},{row['actual']:.17g},"
                         f"{row['ratio']:.17g}")
        return "\n".join(lines) + "\n"


class EstimateError(ValueError):
    def __init__(self, message, order):
        super().__init__(message)
        self.order = order


def _pow(base: float, e: int) -> float:
    return 1.0 if e == 0 else base ** e


def estimate_report(nf: NormalFormResult, dt: DivisorTable, A: float, C: float) -> EstimateReport:
    """Compare the computed norms with the a priori bounds.

    With ``B = 4C + 8(r + 2)A``:
    ``|X_s| <= T_s B^{s-1} A / s`` and ``|Z_s| <= T_{s-1} B^{s-1} A / s`` for ``s <= r``;
    ``|Q_s| <= alpha_r^{-(s-1)} B^{s-1} A / s`` for ``s > r``; and the per-order
    solve bound ``|X_s| <= |Psi_s| / alpha_s``.  Norms are taken in the
    complex frame.
    """
    if A <= 0 or C < 0:
        raise EstimateError("need A > 0 and C >= 0", 0)
    for s in range(1, nf.G_seq.s_max + 1):
        g = nf.G_seq[s].norm()
        bound = _pow(C, s - 1) * A
        if g > bound * (1 + 1e-12):
            raise EstimateError(f"|G_{s}| = {g:.6g} exceeds C^(s-1) A = {bound:.6g}", s)
    r = nf.order_r
    if dt.s_max < max(nf.s_max, 1):
        raise ValueError("divisor table too short")
    B = 4 * C + 8 * (r + 2) * A
    rep = EstimateReport(A, C, B, nf.frame)

    def add(s, qty, bound, actual):
        ratio = actual / bound if bound > 0 else (0.0 if actual == 0 else math.inf)
        rep.rows.append({"order": s, "quantity": qty, "bound": bound, "actual": actual, "ratio": ratio,
                         "holds": actual <= bound * (1 + 1e-12)})

    for s in range(1, nf.s_max + 1):
        scale = _pow(B, s - 1) * A / s
        if s <= r:
            X, Z, P = nf.X_seq[s].norm(), nf.Z_seq[s].norm(), nf.psi[s].norm()
            add(s, "X", dt.T[s] * scale, X)
            add(s, "Z", dt.T[s - 1] * scale, Z)
            add(s, "X_solve", P / dt.alpha[s], X)
            used = nf.resonance.min_divisor.get(s)
            if used is not None:
                # every divisor used at this order must dominate alpha_s
                add(s, "divisor", used, dt.alpha[s])
        else:
            alpha_r = dt.alpha[r] if r >= 1 else 1.0
            add(s, "Q", scale / _pow(alpha_r, s - 1), nf.Q_seq[s].norm())
    return rep
