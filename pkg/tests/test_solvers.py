import itertools

import numpy as np
import pytest

from l0qsvm.errors import InvalidArgument, NumericError
from l0qsvm.quadfeat import build_feature_cache
from l0qsvm.solvers import (
    DualState,
    hard_threshold,
    hinge_subproblem_objective,
    ls_system,
    penalty_objective,
    recover_primal_hinge,
    solve_dual_qp,
    solve_hinge_subproblem,
    solve_ls_subproblem,
    solve_z_step,
    top_k_support,
)


def separable_cache(rng, m=6, n=2, gap=2.0):
    half = m // 2
    X = np.vstack([
        rng.standard_normal((half, n)) * 0.3 + gap,
        rng.standard_normal((m - half, n)) * 0.3 - gap,
    ])
    y = np.concatenate([np.ones(half), -np.ones(m - half)])
    return build_feature_cache(X, y)


def hinge_kkt_residuals(cache, z, c, xi, alpha, u, rho, C):
    """Independent evaluation of the six optimality conditions of the
    penalized hinge subproblem."""
    y, r = cache.y, cache.r
    margins = y * (r @ z + c)
    stationarity = (cache.G + rho * np.eye(cache.d)) @ z - r.T @ (alpha * y) - rho * u
    return {
        "stationarity": np.max(np.abs(stationarity)),
        "comp_alpha": np.max(np.abs(alpha * (1.0 - xi - margins))),
        "comp_upper": np.max(np.abs((C - alpha) * xi)),
        "primal_feas": max(0.0, np.max(1.0 - xi - margins)),
        "equality": abs(np.dot(y, alpha)),
        "bounds": max(0.0, -xi.min(), -alpha.min(), (alpha - C).max()),
    }


# ---------------------------------------------------------------------------
# hard thresholding


def test_hard_threshold_examples():
    assert np.array_equal(hard_threshold(np.array([3.0, -1.0, 2.0]), 2), [3, 0, 2])
    assert np.array_equal(hard_threshold(np.array([1.0, 1.0]), 2), [1, 1])
    # equal magnitudes: lowest index wins
    assert np.array_equal(hard_threshold(np.array([2.0, -2.0, 1.0]), 1), [2, 0, 0])


def test_hard_threshold_rejects_bad_k():
    with pytest.raises(InvalidArgument):
        hard_threshold(np.ones(3), 0)
    with pytest.raises(InvalidArgument):
        hard_threshold(np.ones(3), 4)


def test_hard_threshold_idempotent():
    rng = np.random.default_rng(0)
    for _ in range(25):
        z = rng.standard_normal(9)
        k = int(rng.integers(1, 10))
        u = hard_threshold(z, k)
        assert np.array_equal(hard_threshold(u, k), u)


def test_hard_threshold_matches_exhaustive_enumeration():
    # oracle: minimize ||z - u||^2 over every k-sized support
    rng = np.random.default_rng(1)
    z = rng.standard_normal(10)
    for k in (1, 3, 7):
        u = hard_threshold(z, k)
        got = np.sum((z - u) ** 2)
        best = min(
            np.sum(np.delete(z, list(keep)) ** 2)
            for keep in itertools.combinations(range(10), k)
        )
        assert np.isclose(got, best, rtol=0, atol=1e-12)
        assert np.count_nonzero(u) <= k
        kept = u != 0
        assert np.array_equal(u[kept], z[kept])


def test_top_k_support_sorted():
    S = top_k_support(np.array([0.1, -5.0, 3.0]), 2)
    assert np.array_equal(S, [1, 2])


# ---------------------------------------------------------------------------
# hinge dual


def two_point_cache():
    X = np.array([[1.0], [-1.0]])
    y = np.array([1.0, -1.0])
    return build_feature_cache(X, y)


def dual_value_on_line(cache, a, rho, u):
    """Dual objective along the equality-feasible line alpha = (a, a)."""
    v = cache.r[0] * a - cache.r[1] * a + rho * u  # y = (+1, -1)
    P = np.linalg.inv(cache.G + rho * np.eye(cache.d))
    return -2.0 * a + 0.5 * v @ P @ v


@pytest.mark.parametrize("C,expected", [(1.0, 1.0), (5.0, 2.5)])
def test_dual_two_point_instance(C, expected):
    # oracle: scalar line search over the feasible segment alpha1 = alpha2
    cache = two_point_cache()
    rho, u = 1.0, np.zeros(2)
    grid = np.linspace(0.0, C, 200001)
    vals = np.array([dual_value_on_line(cache, a, rho, u) for a in grid[:: len(grid) // 400]])
    coarse = grid[:: len(grid) // 400][np.argmin(vals)]
    fine = np.linspace(max(0.0, coarse - 0.05), min(C, coarse + 0.05), 20001)
    a_star = fine[np.argmin([dual_value_on_line(cache, a, rho, u) for a in fine])]
    assert abs(a_star - expected) <= 1e-4  # frozen analytic optimum min(C, 2.5)

    state = solve_dual_qp(cache, u, rho, C, tol=1e-9)
    assert np.all(np.abs(state.alpha - expected) <= 1e-6)


def test_dual_box_collapses_as_C_vanishes():
    cache = two_point_cache()
    state = solve_dual_qp(cache, np.zeros(2), 1.0, 1e-12, tol=1e-9)
    assert np.all(state.alpha <= 1e-12)
    assert abs(state.objective) <= 1e-11


def test_dual_invariants_random_instances():
    rng = np.random.default_rng(5)
    for trial in range(20):
        m = int(rng.integers(4, 16))
        n = int(rng.integers(1, 4))
        X = rng.standard_normal((m, n))
        y = np.where(rng.standard_normal(m) > 0, 1.0, -1.0)
        if np.all(y == y[0]):
            y[0] = -y[0]
        cache = build_feature_cache(X, y)
        u = hard_threshold(rng.standard_normal(cache.d), max(1, cache.d // 2))
        C = float(10 ** rng.uniform(-1, 1))
        state = solve_dual_qp(cache, u, rho=1.0, C=C, tol=1e-8)
        assert state.alpha.min() >= 0.0 and state.alpha.max() <= C
        assert abs(np.dot(y, state.alpha)) <= 1e-10
        assert state.kkt_residual <= 1e-8


def test_duality_gap_small_on_separable_data():
    rng = np.random.default_rng(6)
    cache = separable_cache(rng, m=6, n=2)
    u = np.zeros(cache.d)
    for rho in (0.1, 1.0, 10.0):
        sol = solve_hinge_subproblem(cache, u, rho, C=1.0, tol=1e-9)
        primal = hinge_subproblem_objective(cache, sol.z.values, sol.c, sol.xi, u, rho, 1.0)
        gap = primal - sol.alpha.objective
        assert -1e-9 <= gap <= 1e-5 * (1 + abs(primal))


def test_recover_primal_collapsed_cases():
    cache = two_point_cache()
    zero = DualState(alpha=np.zeros(2), objective=0.0, kkt_residual=0.0)
    sol = recover_primal_hinge(zero, cache, np.zeros(2), 1.0, 1.0)
    assert np.array_equal(sol.z.values, np.zeros(2))
    assert np.array_equal(sol.xi, np.maximum(0.0, 1.0 - cache.y * sol.c))

    e1 = np.zeros(2)
    e1[0] = 1.0
    sol = recover_primal_hinge(zero, cache, e1, 1.0, 1.0)
    want = np.linalg.solve(cache.G + np.eye(2), e1)
    assert np.allclose(sol.z.values, want, rtol=1e-12, atol=1e-14)


def test_recover_primal_kkt_two_point():
    cache = two_point_cache()
    u = np.zeros(2)
    sol = solve_hinge_subproblem(cache, u, rho=1.0, C=1.0, tol=1e-9)
    res = hinge_kkt_residuals(cache, sol.z.values, sol.c, sol.xi,
                              sol.alpha.alpha, u, 1.0, 1.0)
    assert max(res.values()) <= 1e-6, res


def test_recover_primal_max_positive_rule():
    rng = np.random.default_rng(7)
    cache = separable_cache(rng, m=8, n=2)
    u = np.zeros(cache.d)
    sol = solve_hinge_subproblem(cache, u, rho=1.0, C=1.0, tol=1e-9)
    compat = recover_primal_hinge(sol.alpha, cache, u, 1.0, 1.0, c_rule="max-positive")
    mask = (cache.y > 0) & (sol.alpha.alpha > 1e-8)
    assert compat.c == pytest.approx(np.max(-(cache.r @ compat.z.values)[mask]))


# ---------------------------------------------------------------------------
# quadratic loss


def test_ls_zero_feature_instance():
    cache = build_feature_cache(np.array([[0.0]]), np.array([1.0]))
    for rho, C in [(0.5, 1.0), (2.0, 7.0)]:
        sol = solve_ls_subproblem(cache, np.zeros(2), rho, C)
        assert np.allclose(sol.z.values, 0.0, atol=1e-12)
        assert sol.c == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(sol.xi, 0.0, atol=1e-12)


def ls_objective(cache, z, c, u, rho, C):
    resid = 1.0 - cache.y * (cache.r @ z + c)
    return (0.5 * z @ (cache.G + rho * np.eye(cache.d)) @ z
            + C * np.sum(resid ** 2) - rho * u @ z)


def test_ls_gradient_matches_central_differences():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((5, 2))
    y = np.where(rng.standard_normal(5) > 0, 1.0, -1.0)
    cache = build_feature_cache(X, y)
    u = hard_threshold(rng.standard_normal(cache.d), 3)
    rho, C = 0.7, 2.0
    sol = solve_ls_subproblem(cache, u, rho, C)
    theta = np.concatenate([sol.z.values, [sol.c]])
    h = 1e-5

    def obj(th):
        return ls_objective(cache, th[:-1], th[-1], u, rho, C)

    scale = max(1.0, abs(obj(theta)))
    for idx in range(theta.size):
        e = np.zeros_like(theta)
        e[idx] = h
        deriv = (obj(theta + e) - obj(theta - e)) / (2 * h)
        assert abs(deriv) <= 1e-5 * scale


def test_ls_solution_beats_random_probes():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((5, 2))
    y = np.where(rng.standard_normal(5) > 0, 1.0, -1.0)
    cache = build_feature_cache(X, y)
    u = np.zeros(cache.d)
    rho, C = 1.0, 3.0
    sol = solve_ls_subproblem(cache, u, rho, C)
    base = ls_objective(cache, sol.z.values, sol.c, u, rho, C)
    for _ in range(1000):
        delta = rng.standard_normal(cache.d + 1)
        delta *= 1e-2 / np.linalg.norm(delta)
        probe = ls_objective(cache, sol.z.values + delta[:-1], sol.c + delta[-1], u, rho, C)
        assert base <= probe + 1e-12


def test_ls_system_residual_and_xi_definition():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((7, 3))
    y = np.where(rng.standard_normal(7) > 0, 1.0, -1.0)
    cache = build_feature_cache(X, y)
    u = rng.standard_normal(cache.d)
    M, rhs = ls_system(cache, u, 0.5, 2.0)
    sol = solve_ls_subproblem(cache, u, 0.5, 2.0)
    theta = np.concatenate([sol.z.values, [sol.c]])
    assert np.linalg.norm(M @ theta - rhs) <= 1e-8 * np.linalg.norm(rhs)
    assert np.array_equal(sol.xi, 1.0 - y * (cache.r @ sol.z.values + sol.c))


def test_ls_system_simplification_is_exact():
    # keeping the squared label matrix explicit must change nothing
    rng = np.random.default_rng(11)
    X = rng.standard_normal((6, 2))
    y = np.where(rng.standard_normal(6) > 0, 1.0, -1.0)
    cache = build_feature_cache(X, y)
    u = rng.standard_normal(cache.d)
    M1, rhs1 = ls_system(cache, u, 0.3, 1.5, simplified=True)
    M2, rhs2 = ls_system(cache, u, 0.3, 1.5, simplified=False)
    assert np.allclose(M1, M2, rtol=0, atol=1e-12)
    assert np.allclose(rhs1, rhs2, rtol=0, atol=1e-12)


def test_ls_rejects_nonpositive_rho():
    cache = build_feature_cache(np.array([[1.0]]), np.array([1.0]))
    with pytest.raises(NumericError):
        solve_ls_subproblem(cache, np.zeros(2), 0.0, 1.0)


# ---------------------------------------------------------------------------
# both losses: exact block minimization


@pytest.mark.parametrize("loss", ["hinge", "quadratic"])
def test_z_step_beats_random_competitors(loss):
    rng = np.random.default_rng(12)
    X = rng.standard_normal((8, 2))
    y = np.where(rng.standard_normal(8) > 0, 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    cache = build_feature_cache(X, y)
    u = hard_threshold(rng.standard_normal(cache.d), 2)
    rho, C = 0.5, 2.0
    sol = solve_z_step(cache, u, rho, C, loss, dual_tol=1e-9)
    base = penalty_objective(cache, sol.z.values, sol.c, u, rho, C, loss)
    for _ in range(500):
        delta = rng.standard_normal(cache.d + 1)
        delta *= 1e-2 / np.linalg.norm(delta)
        probe = penalty_objective(cache, sol.z.values + delta[:-1], sol.c + delta[-1],
                                  u, rho, C, loss)
        assert base <= probe + 1e-9 * (1 + abs(base))
