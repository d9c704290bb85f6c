import io

import numpy as np
import pytest

from hfmdp.errors import LpInputError
from hfmdp.simplex import LinearProgram, LpStatus, solve, write_lp


def _dual_objective(lp, sol):
    """b·y plus the finite bound terms; equals c·x at an optimum."""
    total = float(lp.b_ge @ sol.dual_ge) + float(lp.b_eq @ sol.dual_eq)
    finite_lo = np.isfinite(lp.lower)
    finite_hi = np.isfinite(lp.upper)
    total += float(lp.lower[finite_lo] @ sol.lower_dual[finite_lo])
    total -= float(lp.upper[finite_hi] @ sol.upper_dual[finite_hi])
    return total


def _random_feasible_lp(rng):
    m_ge = int(rng.integers(1, 6))
    m_eq = int(rng.integers(0, 3))
    n = int(rng.integers(2, 7))
    x0 = rng.uniform(0.0, 2.0, size=n)
    A_ge = np.round(rng.normal(size=(m_ge, n)), 2)
    b_ge = A_ge @ x0 - rng.uniform(0.0, 1.0, size=m_ge)
    A_eq = np.round(rng.normal(size=(m_eq, n)), 2)
    b_eq = A_eq @ x0
    c = np.round(rng.uniform(0.1, 3.0, size=n), 2)
    upper = np.where(rng.random(n) < 0.3, 3.0, np.inf)
    return LinearProgram.build(c=c, A_ge=A_ge, b_ge=b_ge, A_eq=A_eq, b_eq=b_eq, upper=upper)


def test_small_lp_with_known_optimum():
    # min x + y  s.t.  x + 2y >= 4, 3x + y >= 6
    lp = LinearProgram.build(c=[1, 1], A_ge=[[1, 2], [3, 1]], b_ge=[4, 6])
    sol = solve(lp)
    assert sol.status is LpStatus.OPTIMAL
    np.testing.assert_allclose(sol.x, [1.6, 1.2], atol=1e-9)
    assert sol.objective == pytest.approx(2.8)
    np.testing.assert_allclose(sol.dual_ge, [0.4, 0.2], atol=1e-9)


def test_equality_rows_and_free_variables():
    # min -x  s.t.  x + y = 3, x - y >= -1, y free, x <= 5
    lp = LinearProgram.build(c=[-1, 0], A_ge=[[1, -1]], b_ge=[-1], A_eq=[[1, 1]], b_eq=[3],
                             lower=[0, -np.inf], upper=[5, np.inf])
    sol = solve(lp)
    assert sol.optimal
    np.testing.assert_allclose(sol.x, [5.0, -2.0], atol=1e-9)
    assert sol.upper_dual[0] > 0
    assert _dual_objective(lp, sol) == pytest.approx(sol.objective)


def test_negative_bounds_are_reflected():
    lp = LinearProgram.build(c=[1], lower=[-4], upper=[-1])
    sol = solve(lp)
    assert sol.x[0] == pytest.approx(-4.0)
    assert sol.lower_dual[0] == pytest.approx(1.0)


def test_unbounded_lp_reports_a_ray():
    # min -x - y  s.t.  x - y >= -1
    lp = LinearProgram.build(c=[-1, -1], A_ge=[[1, -1]], b_ge=[-1])
    sol = solve(lp)
    assert sol.status is LpStatus.UNBOUNDED
    assert sol.ray is not None
    assert lp.c @ sol.ray < 0
    assert np.all(lp.A_ge @ sol.ray >= -1e-12)
    assert np.all(sol.ray >= -1e-12)


def test_infeasible_lp():
    lp = LinearProgram.build(c=[1], A_ge=[[1], [-1]], b_ge=[2, -1])
    assert solve(lp).status is LpStatus.INFEASIBLE


def test_redundant_equalities_are_dropped():
    lp = LinearProgram.build(c=[1, 2], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2])
    sol = solve(lp)
    assert sol.optimal
    np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-9)
    assert sol.dual.shape == (2,)


def test_degenerate_lp_terminates():
    # a classic cycling example under the largest-coefficient rule
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    lp = LinearProgram.build(c=c, A_ge=-np.asarray(A), b_ge=[0, 0, -1])
    sol = solve(lp)
    assert sol.optimal
    assert sol.objective == pytest.approx(-0.05)


def test_input_checks():
    with pytest.raises(LpInputError):
        LinearProgram.build(c=[1, 1], A_ge=[[1, 1, 1]], b_ge=[1])
    with pytest.raises(LpInputError):
        LinearProgram.build(c=[1], A_ge=[[1]], b_ge=[1, 2])
    with pytest.raises(LpInputError):
        LinearProgram.build(c=[np.inf])
    with pytest.raises(LpInputError):
        LinearProgram.build(c=[1], lower=[2], upper=[1])


def test_strong_duality_on_random_lps():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        lp = _random_feasible_lp(rng)
        sol = solve(lp)
        assert sol.status is LpStatus.OPTIMAL
        assert np.all(lp.A_ge @ sol.x >= lp.b_ge - 1e-7)
        np.testing.assert_allclose(lp.A_eq @ sol.x, lp.b_eq, atol=1e-7)
        assert np.all(sol.dual_ge >= -1e-9)
        assert abs(sol.objective - _dual_objective(lp, sol)) <= 1e-7 * max(1.0, abs(sol.objective))


def test_matches_scipy_on_random_lps():
    linprog = pytest.importorskip("scipy.optimize").linprog
    rng = np.random.default_rng(7)
    for _ in range(500):
        lp = _random_feasible_lp(rng)
        sol = solve(lp)
        ref = linprog(lp.c, A_ub=-lp.A_ge, b_ub=-lp.b_ge,
                      A_eq=lp.A_eq if lp.A_eq.size else None, b_eq=lp.b_eq if lp.b_eq.size else None,
                      bounds=list(zip(lp.lower, [None if np.isinf(u) else u for u in lp.upper])),
                      method="highs")
        assert ref.status == 0
        assert sol.objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)


def test_write_lp_format():
    lp = LinearProgram.build(c=[1, -2], A_ge=[[1, 1]], b_ge=[1], A_eq=[[1, -1]], b_eq=[0],
                             lower=[0, -np.inf], upper=[4, np.inf], names=["a", "b"], row_names=["cover", "tie"])
    buf = io.StringIO()
    text = write_lp(lp, buf)
    assert buf.getvalue() == text
    assert "Minimize" in text
    assert " cover: 1.0 a + 1.0 b >= 1.0" in text
    assert " tie: 1.0 a - 1.0 b = 0.0" in text
    assert " b free" in text
    assert " 0.0 <= a <= 4.0" in text
    assert text.endswith("End\n")
