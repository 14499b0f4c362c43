from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from sensorgame.simplex import LPInfeasible, LPUnbounded, certify, linprog_simplex


def test_textbook_lp():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
    c = [3, 5]
    A = [[1, 0], [0, 2], [3, 2]]
    b = [4, 12, 18]
    sol = linprog_simplex(c, A, b)
    assert sol.x_exact == [Fraction(2), Fraction(6)]
    assert sol.objective == 36.0
    cert = certify(sol, c, A, b)
    assert cert["max"] == 0.0
    np.testing.assert_allclose(sol.dual_ub, [0, 1.5, 1])


def test_equality_and_negative_rhs():
    # min x + y  s.t. x + y >= 1 (written as -x - y <= -1), x - y = 0.2
    sol = linprog_simplex([-1, -1], [[-1, -1]], [-1], [[1, -1]], [0.2])
    assert sol.x_exact == [Fraction(3, 5), Fraction(2, 5)]


def test_infeasible_and_unbounded():
    with pytest.raises(LPInfeasible):
        linprog_simplex([1, 1], [[1, 1]], [1], [[1, 1]], [2])
    with pytest.raises(LPUnbounded):
        linprog_simplex([1, 0], [[-1, 1]], [1])


def test_degenerate_lp_terminates():
    # classic cycling example under the largest-coefficient rule
    c = [0.75, -150, 0.02, -6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    b = [0, 0, 1]
    sol = linprog_simplex(c, A, b)
    assert sol.objective == pytest.approx(0.05, abs=1e-12)


@pytest.mark.parametrize("exact", [True, False])
def test_random_lps_against_scipy(exact):
    rng = np.random.default_rng(11)
    for _ in range(40):
        n, m_ub, m_eq = rng.integers(2, 7), rng.integers(1, 6), rng.integers(0, 3)
        A_ub = rng.normal(size=(m_ub, n))
        x0 = rng.uniform(0.1, 1.0, n)
        b_ub = A_ub @ x0 + rng.uniform(0.0, 1.0, m_ub)
        A_eq = rng.normal(size=(m_eq, n))
        b_eq = A_eq @ x0
        # box keeps it bounded
        A_ub = np.vstack([A_ub, np.eye(n)])
        b_ub = np.concatenate([b_ub, np.full(n, 3.0)])
        c = rng.normal(size=n)
        ref = linprog(-c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq if m_eq else None, b_eq=b_eq if m_eq else None, method="highs")
        assert ref.status == 0
        ours = linprog_simplex(c, A_ub, b_ub, A_eq if m_eq else None, b_eq if m_eq else None, exact=exact, digits=None if not exact else 15)
        assert ours.objective == pytest.approx(-ref.fun, abs=1e-8)
        cert = certify(ours, c, A_ub, b_ub, A_eq if m_eq else None, b_eq if m_eq else None)
        assert cert["max"] <= 1e-8
