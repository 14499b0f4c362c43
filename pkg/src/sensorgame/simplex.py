"""Dense two-phase primal simplex with Bland's rule.

Solves ``max c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0``. The same
tableau code runs on ``Fraction`` entries (exact) or floats; the arithmetic
is chosen by the ``exact`` flag. Duals come out of the final tableau and are
used to certify optimality against the float data.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from sensorgame.errors import NumericError

FLOAT_EPS = 1e-11


class LPInfeasible(NumericError):
    pass


class LPUnbounded(NumericError):
    pass


@dataclass
class LPSolution:
    x: np.ndarray
    objective: float
    dual_ub: np.ndarray
    dual_eq: np.ndarray
    basis: list
    exact: bool
    x_exact: list | None = None
    certificate: dict | None = None


def _to_fraction(v: float, digits: int | None) -> Fraction:
    if digits is None:
        return Fraction(float(v))
    # repr of the rounded float is its shortest decimal form
    return Fraction(repr(round(float(v), digits)))


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] = T[row] / T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0
    nz = np.nonzero(col_vals != 0)[0]
    if nz.size:
        T[nz] -= np.outer(col_vals[nz], T[row])


def _run_phase(T: np.ndarray, basis: list, allowed: np.ndarray, eps) -> None:
    """Minimise-reduced-cost loop on tableau ``T`` (objective row last, RHS column last)."""
    n_rows = T.shape[0] - 1
    while True:
        obj = T[-1, :-1]
        entering = None
        for j in np.nonzero(allowed)[0]:
            if obj[j] < -eps:
                entering = int(j)
                break
        if entering is None:
            return
        best, leave = None, None
        for i in range(n_rows):
            a = T[i, entering]
            if a > eps:
                ratio = T[i, -1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise LPUnbounded("objective is unbounded")
        _pivot(T, leave, entering)
        basis[leave] = entering


def linprog_simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, exact: bool = True, digits: int | None = 12) -> LPSolution:
    """Maximise ``c'x`` subject to the given constraints and ``x >= 0``.

    With ``exact=True`` every coefficient is rounded to ``digits`` decimals
    and converted to a ``Fraction`` so the pivots are exact.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    if exact:
        conv = np.vectorize(lambda v: _to_fraction(v, digits), otypes=[object])
        zero, one, eps = Fraction(0), Fraction(1), Fraction(0)
    else:
        conv = lambda a: np.asarray(a, dtype=float)  # noqa: E731
        zero, one, eps = 0.0, 1.0, FLOAT_EPS
    dtype = object if exact else float

    A = np.concatenate([A_ub, A_eq]) if m else np.zeros((0, n))
    b = np.concatenate([b_ub, b_eq])
    A = conv(A) if m else A.astype(dtype)
    b = conv(b) if m else b.astype(dtype)
    cc = conv(c)

    # columns: x (n) | slack (m_ub) | artificial (m)
    sign = np.array([one] * m, dtype=dtype)
    n_cols = n + m_ub + m
    T = np.empty((m + 1, n_cols + 1), dtype=dtype)
    T[...] = zero
    identity_col = [0] * m
    for i in range(m):
        flip = b[i] < 0
        sign[i] = -one if flip else one
        T[i, :n] = A[i] * sign[i]
        T[i, -1] = b[i] * sign[i]
        if i < m_ub:
            T[i, n + i] = sign[i]
        T[i, n + m_ub + i] = one
        identity_col[i] = n + m_ub + i
    basis = [n + m_ub + i for i in range(m)]
    for i in range(m_ub):
        if sign[i] == one:
            basis[i] = n + i
            T[i, n + m_ub + i] = zero
            identity_col[i] = n + i

    # phase 1: minimise the sum of artificials in the basis
    art_cols = [basis[i] for i in range(m) if basis[i] >= n + m_ub]
    T[-1] = zero
    for i in range(m):
        if basis[i] >= n + m_ub:
            T[-1] -= T[i]
    for j in art_cols:
        T[-1, j] = zero
    allowed = np.ones(n_cols, dtype=bool)
    _run_phase(T, basis, allowed, eps)
    infeas = -T[-1, -1]
    if (infeas > eps) if exact else (abs(infeas) > 1e-9):
        raise LPInfeasible(f"constraints are infeasible (phase-1 residual {float(infeas):.3e})")

    # drive zero-level artificials out of the basis where possible
    art_start = n + m_ub
    for i in range(m):
        if basis[i] >= art_start:
            for j in range(art_start):
                if abs(T[i, j]) > eps:
                    _pivot(T, i, j)
                    basis[i] = j
                    break

    # phase 2
    allowed = np.zeros(n_cols, dtype=bool)
    allowed[:art_start] = True
    T[-1] = zero
    T[-1, :n] = -cc
    for i in range(m):
        cb = cc[basis[i]] if basis[i] < n else zero
        if cb != 0:
            T[-1] -= -cb * T[i]
    _run_phase(T, basis, allowed, eps)

    x_exact = [zero] * n
    for i, bcol in enumerate(basis):
        if bcol < n:
            x_exact[bcol] = T[i, -1]
    # reduced cost of a row's identity column is the dual of that (sign-adjusted) row
    duals = [T[-1, identity_col[i]] * sign[i] for i in range(m)]
    x = np.array([float(v) for v in x_exact])
    duals_f = np.array([float(v) for v in duals])
    return LPSolution(
        x=x,
        objective=float(T[-1, -1]),
        dual_ub=duals_f[:m_ub],
        dual_eq=duals_f[m_ub:],
        basis=list(basis),
        exact=exact,
        x_exact=list(x_exact) if exact else None,
    )


def certify(sol: LPSolution, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None) -> dict:
    """Primal/dual feasibility, complementary slackness and duality gap on float data."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    x, y, z = sol.x, sol.dual_ub, sol.dual_eq
    slack_ub = b_ub - A_ub @ x
    reduced = A_ub.T @ y + A_eq.T @ z - c
    res = {
        "primal": float(max([0.0, -x.min(initial=0.0), -slack_ub.min(initial=0.0), np.abs(A_eq @ x - b_eq).max(initial=0.0)])),
        "dual": float(max(0.0, -y.min(initial=0.0), -reduced.min(initial=0.0))),
        "complementary": float(max(np.abs(x * reduced).max(initial=0.0), np.abs(y * slack_ub).max(initial=0.0))),
        "gap": float(abs(c @ x - (b_ub @ y + b_eq @ z))),
    }
    res["max"] = max(res.values())
    sol.certificate = res
    return res
