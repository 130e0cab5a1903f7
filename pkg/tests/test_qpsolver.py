import itertools

import numpy as np
import pytest

from wbsim.errors import BadProblem
from wbsim.qpsolver import ActiveSetSolver, QpProblem, QpStatus, friction_fixed_point, solve_qp


def brute_force(Q, c, A, l, u):
    """Enumerate every assignment of rows to {free, lower, upper}; keep the best feasible KKT point."""
    d, m = Q.shape[0], A.shape[0]
    best, best_x = np.inf, None
    for combo in itertools.product((0, -1, 1), repeat=m):
        rows = [i for i in range(m) if combo[i] != 0]
        rhs = [l[i] if combo[i] < 0 else u[i] for i in rows]
        if any(not np.isfinite(r) for r in rhs):
            continue
        k = len(rows)
        K = np.zeros((d + k, d + k))
        K[:d, :d] = Q
        K[:d, d:] = A[rows].T
        K[d:, :d] = A[rows]
        b = np.concatenate([-c, rhs])
        sol, *_ = np.linalg.lstsq(K, b, rcond=None)
        x = sol[:d]
        if np.abs(K @ sol - b).max() > 1e-8:
            continue
        Ax = A @ x
        if np.any(Ax < l - 1e-9) or np.any(Ax > u + 1e-9):
            continue
        f = 0.5 * x @ Q @ x + c @ x
        if f < best:
            best, best_x = f, x
    return best, best_x


def test_unconstrained_scalar():
    r = solve_qp(QpProblem(np.array([[1.0]]), np.array([-1.0])))
    assert r.optimal and r.x == pytest.approx([1.0])


def test_scalar_upper_bound_active():
    r = solve_qp(QpProblem(np.array([[1.0]]), np.array([-1.0]), np.array([[1.0]]), np.array([-np.inf]), np.array([0.5])))
    assert r.optimal and r.x == pytest.approx([0.5])
    assert r.active_constraints == [(0, "upper")]


def test_general_constraint_active():
    # min (x-1)^2 + (y-1)^2 s.t. x + y <= 1
    r = solve_qp(QpProblem(2 * np.eye(2), np.array([-2.0, -2.0]), np.array([[1.0, 1.0]]), np.array([-np.inf]), np.array([1.0])))
    assert r.optimal and np.allclose(r.x, [0.5, 0.5])
    assert r.kkt["stationarity"] <= 1e-9


@pytest.mark.parametrize("seed", range(40))
def test_random_box_against_enumeration(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 7))
    B = rng.normal(size=(d, d))
    Q = B @ B.T + (1e-3 if seed % 3 else 0.0) * np.eye(d)
    c = rng.normal(size=d) * 3
    lo = -rng.uniform(0.1, 2.0, size=d)
    hi = rng.uniform(0.1, 2.0, size=d)
    A = np.eye(d)
    r = solve_qp(QpProblem(Q, c, A, lo, hi))
    best, _ = brute_force(Q, c, A, lo, hi)
    assert r.optimal
    assert r.objective <= best + 1e-8
    assert r.objective == pytest.approx(best, abs=1e-6)
    assert max(r.kkt.values()) <= 1e-9 * max(1.0, np.abs(Q).max(), np.abs(c).max())


@pytest.mark.parametrize("seed", range(25))
def test_random_general_against_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    d = int(rng.integers(2, 5))
    m = int(rng.integers(1, 6))
    B = rng.normal(size=(d, d))
    Q = B @ B.T + 0.1 * np.eye(d)
    c = rng.normal(size=d) * 2
    A = rng.normal(size=(m, d))
    x_feas = rng.normal(size=d) * 0.3
    Ax = A @ x_feas
    lo = np.where(rng.random(m) < 0.3, -np.inf, Ax - rng.uniform(0.0, 1.0, m))
    hi = np.where(rng.random(m) < 0.3, np.inf, Ax + rng.uniform(0.0, 1.0, m))
    r = solve_qp(QpProblem(Q, c, A, lo, hi))
    best, x_best = brute_force(Q, c, A, lo, hi)
    assert r.optimal
    assert r.objective <= best + 1e-8
    assert np.allclose(r.x, x_best, atol=1e-6)


def test_psd_with_bounds():
    # zero curvature in y: the bound on y decides
    Q = np.diag([1.0, 0.0])
    r = solve_qp(QpProblem(Q, np.array([-1.0, -1.0]), np.eye(2), np.array([-5.0, -5.0]), np.array([5.0, 2.0])))
    assert r.optimal and np.allclose(r.x, [1.0, 2.0])


def test_unbounded_reported():
    r = solve_qp(QpProblem(np.diag([1.0, 0.0]), np.array([0.0, -1.0])))
    assert r.status is QpStatus.UNBOUNDED


def test_infeasible_general_rows():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    r = solve_qp(QpProblem(np.eye(2), np.zeros(2), A, np.array([1.0, -np.inf]), np.array([np.inf, 0.0])))
    assert r.status is QpStatus.INFEASIBLE


def test_infeasible_bounds():
    A = np.array([[1.0], [1.0]])
    r = solve_qp(QpProblem(np.eye(1), np.zeros(1), A, np.array([1.0, -np.inf]), np.array([np.inf, 0.0])))
    assert r.status is QpStatus.INFEASIBLE


def test_bad_problems():
    with pytest.raises(BadProblem):
        solve_qp(QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2)))
    with pytest.raises(BadProblem):
        solve_qp(QpProblem(np.eye(1), np.zeros(1), np.eye(1), np.array([1.0]), np.array([0.0])))
    with pytest.raises(BadProblem):
        QpProblem(np.eye(2), np.zeros(3))


def test_equality_rows():
    A = np.array([[1.0, 1.0]])
    r = solve_qp(QpProblem(np.eye(2), np.zeros(2), A, np.array([1.0]), np.array([1.0])))
    assert r.optimal and np.allclose(r.x, [0.5, 0.5])


def test_max_iter_reported():
    rng = np.random.default_rng(5)
    d = 8
    B = rng.normal(size=(d, d))
    r = solve_qp(QpProblem(B @ B.T + np.eye(d), 10 * rng.normal(size=d), np.eye(d), -np.ones(d) * 0.01, np.ones(d) * 0.01),
                 {"max_iter": 1})
    assert r.status in (QpStatus.MAX_ITER, QpStatus.OPTIMAL)
    if r.status is QpStatus.OPTIMAL:
        assert r.iterations <= 1


def test_warm_start_same_solution():
    rng = np.random.default_rng(9)
    solver = ActiveSetSolver()
    cold = []
    warm = []
    d = 6
    B = rng.normal(size=(d, d))
    Q = B @ B.T + 0.1 * np.eye(d)
    for k in range(20):
        c = rng.normal(size=d) + 0.05 * k
        A = np.vstack([np.eye(d), rng.normal(size=(2, d))])
        lo = np.concatenate([-np.ones(d), [-1.0, -1.0]])
        hi = np.concatenate([np.ones(d), [1.0, 1.0]])
        p = QpProblem(Q, c, A, lo, hi)
        cold.append(solve_qp(p).x)
        warm.append(solver.solve(p).x)
    for a, b in zip(cold, warm):
        assert np.allclose(a, b, atol=1e-9)


def test_deterministic():
    rng = np.random.default_rng(10)
    B = rng.normal(size=(5, 5))
    p = QpProblem(B @ B.T, rng.normal(size=5), rng.normal(size=(3, 5)), -np.ones(3), np.ones(3))
    a, b = solve_qp(p), solve_qp(p)
    assert np.array_equal(a.x, b.x) and a.status is b.status


def test_friction_fixed_point_box():
    # two decoupled vertices: normal forces fixed by the equality-like pull,
    # tangential bounds follow them
    nvert = 2
    d = 3 * nvert
    Q = np.eye(d)
    b = np.array([3.0, 0.0, -4.0, -3.0, 0.0, -2.0])  # wants fx = -3, fz = 4 / fx = 3, fz = 2
    x, fix, status, iters, passes, conv = friction_fixed_point(
        Q, b, nvert, 0.5, np.zeros(nvert), np.zeros(d), np.zeros(d, dtype=np.int64), 50, 1e-10, 200, 1e-12)
    assert status == 0 and conv
    assert np.allclose(x, [-2.0, 0.0, 4.0, 1.0, 0.0, 2.0])
