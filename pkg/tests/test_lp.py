import itertools

import numpy as np
import pytest
import scipy.optimize

from tunnelnav.lp import solve_lp


class TestExamples:
    def test_min_x_with_lower_bound(self):
        res = solve_lp(c=[1.0], lower=[3.0], upper=[10.0])
        assert res.status == "optimal"
        assert res.objective == pytest.approx(3.0)

    def test_facet_optimum(self):
        res = solve_lp(c=[-1.0, -1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0],
                       lower=[0.0, 0.0], upper=[1.0, 1.0])
        assert res.status == "optimal"
        assert res.objective == pytest.approx(-1.0)
        assert res.x.sum() == pytest.approx(1.0)

    def test_equality_constraint(self):
        res = solve_lp(c=[1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[4.0],
                       lower=[0.0, 0.0], upper=[10.0, 10.0])
        assert res.status == "optimal"
        np.testing.assert_allclose(res.x, [4.0, 0.0], atol=1e-8)

    def test_infeasible(self):
        res = solve_lp(c=[1.0], A_eq=[[1.0]], b_eq=[5.0],
                       lower=[0.0], upper=[1.0])
        assert res.status == "infeasible"

    def test_unbounded(self):
        res = solve_lp(c=[-1.0], lower=[0.0], upper=[np.inf])
        assert res.status == "unbounded"

    def test_bound_flip_path(self):
        # optimum at upper bounds, reached by bound flips only
        res = solve_lp(c=[-2.0, -3.0], lower=[0.0, 0.0], upper=[1.5, 2.5])
        assert res.status == "optimal"
        np.testing.assert_allclose(res.x, [1.5, 2.5], atol=1e-9)

    def test_degenerate_redundant_rows(self):
        res = solve_lp(c=[1.0, 1.0],
                       A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[2.0, 4.0],
                       lower=[0.0, 0.0], upper=[5.0, 5.0])
        assert res.status == "optimal"
        assert res.objective == pytest.approx(2.0)


def _random_lp(rng, n, m):
    """Feasible bounded random LP: a box plus inequalities satisfied by an
    interior point."""
    lower = rng.uniform(-3, 0, n)
    upper = lower + rng.uniform(0.5, 4.0, n)
    x0 = rng.uniform(lower, upper)
    a_ub = rng.normal(size=(m, n))
    b_ub = a_ub @ x0 + rng.uniform(0.1, 2.0, m)
    c = rng.normal(size=n)
    return c, a_ub, b_ub, lower, upper


def _vertex_enumeration_optimum(c, a_ub, b_ub, lower, upper):
    """Brute force over all basic points: active-set combinations of the
    inequality rows and box bounds."""
    n = len(c)
    rows = [(a_ub[i], b_ub[i]) for i in range(len(b_ub))]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append((e, upper[j]))
        rows.append((-e, -lower[j]))
    best = np.inf
    for combo in itertools.combinations(range(len(rows)), n):
        a = np.array([rows[i][0] for i in combo])
        b = np.array([rows[i][1] for i in combo])
        try:
            x = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            continue
        if np.any(x < lower - 1e-9) or np.any(x > upper + 1e-9):
            continue
        if np.any(a_ub @ x > b_ub + 1e-9):
            continue
        best = min(best, float(c @ x))
    return best


def test_matches_vertex_enumeration_oracle():
    rng = np.random.default_rng(17)
    solved = 0
    while solved < 50:
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 7))
        c, a_ub, b_ub, lower, upper = _random_lp(rng, n, m)
        res = solve_lp(c, A_ub=a_ub, b_ub=b_ub, lower=lower, upper=upper)
        assert res.status == "optimal"
        oracle = _vertex_enumeration_optimum(c, a_ub, b_ub, lower, upper)
        assert res.objective == pytest.approx(oracle, abs=1e-6)
        solved += 1


def test_matches_scipy_on_larger_instances():
    rng = np.random.default_rng(23)
    for _ in range(25):
        n = int(rng.integers(5, 41))
        m = int(rng.integers(3, 61))
        c, a_ub, b_ub, lower, upper = _random_lp(rng, n, m)
        n_eq = int(rng.integers(0, min(4, n)))
        a_eq = rng.normal(size=(n_eq, n)) if n_eq else None
        x0 = np.clip((lower + upper) / 2, lower, upper)
        b_eq = a_eq @ x0 if n_eq else None
        res = solve_lp(c, A_eq=a_eq, b_eq=b_eq, A_ub=a_ub, b_ub=b_ub,
                       lower=lower, upper=upper)
        ref = scipy.optimize.linprog(
            c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
            bounds=list(zip(lower, upper)), method="highs")
        if ref.status == 0:
            assert res.status == "optimal"
            assert res.objective == pytest.approx(ref.fun, abs=1e-6)
            # returned point is feasible
            assert np.all(a_ub @ res.x <= b_ub + 1e-7)
            assert np.all(res.x >= lower - 1e-9)
            assert np.all(res.x <= upper + 1e-9)
        else:
            assert res.status != "optimal"
