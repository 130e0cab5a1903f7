"""Dense convex QP: minimize 1/2 x'Qx + c'x subject to l <= Ax <= u.

Primal active-set method.  Each iteration solves the equality-constrained
subproblem on the working set in a null-space basis, which also copes with
positive semidefinite Q (zero-curvature directions are followed until a
constraint blocks them, or reported as unbounded).  A feasible starting point
comes from clipping when every row is a simple bound, otherwise from a
phase-1 problem whose optimal slack certifies infeasibility.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import BadProblem

_OPTIMAL, _MAXITER, _INFEASIBLE, _UNBOUNDED = 0, 1, 2, 3
_FREE, _LOWER, _UPPER, _EQUAL = 0, -1, 1, 2


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


_STATUS = {_OPTIMAL: QpStatus.OPTIMAL, _MAXITER: QpStatus.MAX_ITER, _INFEASIBLE: QpStatus.INFEASIBLE, _UNBOUNDED: QpStatus.UNBOUNDED}


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray = None
    l: np.ndarray = None
    u: np.ndarray = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        d = Q.shape[0]
        c = np.asarray(self.c, dtype=float).reshape(-1)
        A = np.zeros((0, d)) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=float))
        m = A.shape[0]
        l = np.full(m, -np.inf) if self.l is None else np.asarray(self.l, dtype=float).reshape(-1)
        u = np.full(m, np.inf) if self.u is None else np.asarray(self.u, dtype=float).reshape(-1)
        if Q.shape != (d, d) or c.shape != (d,) or A.shape[1] != d or l.shape != (m,) or u.shape != (m,):
            raise BadProblem(f"inconsistent shapes Q{Q.shape} c{c.shape} A{A.shape} l{l.shape} u{u.shape}")
        for name, val in (("Q", Q), ("c", c), ("A", A)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def check(self):
        Q = self.Q
        if not np.all(np.isfinite(Q)) or not np.all(np.isfinite(self.c)) or not np.all(np.isfinite(self.A)):
            raise BadProblem("non-finite entries in Q, c or A")
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(Q).max(initial=0.0)):
            raise BadProblem("Q is not symmetric")
        if np.any(self.l > self.u):
            bad = int(np.flatnonzero(self.l > self.u)[0])
            raise BadProblem(f"row {bad}: lower bound {self.l[bad]} exceeds upper bound {self.u[bad]}")
        if np.any(np.isnan(self.l)) or np.any(np.isnan(self.u)):
            raise BadProblem("NaN bounds")

    def objective(self, x) -> float:
        return float(0.5 * x @ self.Q @ x + self.c @ x)


@dataclass
class QpResult:
    x: np.ndarray
    status: QpStatus
    active_constraints: list
    multipliers: np.ndarray
    iterations: int
    objective: float
    kkt: dict = field(default_factory=dict)
    certificate: np.ndarray | None = None
    working_set: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


# --------------------------------------------------------------------------- #
# compiled core


@njit(cache=True, nogil=True)
def _active_set(Q, c, A, l, u, x, ws, max_iter, tol):
    d = Q.shape[0]
    m = A.shape[0]
    lam = np.zeros(m)
    status = _MAXITER
    it = 0
    gscale = 1.0 + np.abs(c).max() if d > 0 else 1.0
    while it < max_iter:
        it += 1
        g = Q @ x + c
        k = 0
        for i in range(m):
            if ws[i] != _FREE:
                k += 1
        W = np.empty(k, dtype=np.int64)
        k = 0
        for i in range(m):
            if ws[i] != _FREE:
                W[k] = i
                k += 1
        if k > 0:
            Aw = A[W]
            _, s, Vt = np.linalg.svd(Aw)
            r = 0
            smax = s[0] if s.shape[0] > 0 else 0.0
            for j in range(s.shape[0]):
                if s[j] > 1e-11 * max(1.0, smax):
                    r += 1
            Z = np.ascontiguousarray(Vt[r:].T)
        else:
            Aw = np.zeros((0, d))
            Z = np.eye(d)
        nz = Z.shape[1]
        p = np.zeros(d)
        unbounded_dir = False
        if nz > 0:
            H = Z.T @ Q @ Z
            H = 0.5 * (H + H.T)
            zg = Z.T @ g
            evals, evecs = np.linalg.eigh(H)
            emax = max(np.abs(evals).max(), 0.0)
            thresh = 1e-12 * max(1.0, emax)
            y = evecs.T @ zg
            flat = 0.0
            for j in range(nz):
                if evals[j] <= thresh:
                    flat += y[j] * y[j]
            if np.sqrt(flat) > 1e-12 * gscale:
                w = np.zeros(nz)
                for j in range(nz):
                    if evals[j] <= thresh:
                        w[j] = y[j]
                p = -(Z @ (evecs @ w))
                unbounded_dir = True
            else:
                w = np.zeros(nz)
                for j in range(nz):
                    if evals[j] > thresh:
                        w[j] = y[j] / evals[j]
                p = -(Z @ (evecs @ w))
        pnorm = np.sqrt(p @ p)
        if not unbounded_dir and pnorm <= 1e-13 * (1.0 + np.sqrt(x @ x)):
            if k == 0:
                status = _OPTIMAL
                break
            lamW = np.linalg.lstsq(Aw.T, g)[0]
            worst = -1
            wval = tol
            for jj in range(k):
                i = W[jj]
                v = 0.0
                if ws[i] == _LOWER:
                    v = -lamW[jj]
                elif ws[i] == _UPPER:
                    v = lamW[jj]
                if v > wval:
                    wval = v
                    worst = i
            if worst < 0:
                for jj in range(k):
                    lam[W[jj]] = lamW[jj]
                status = _OPTIMAL
                break
            ws[worst] = _FREE
            continue
        alpha = np.inf if unbounded_dir else 1.0
        block = -1
        bside = 0
        for i in range(m):
            if ws[i] != _FREE:
                continue
            ai = A[i]
            ap = ai @ p
            anorm = np.sqrt(ai @ ai)
            if abs(ap) <= 1e-14 * anorm * pnorm:
                continue
            ax = ai @ x
            if ap < 0.0 and np.isfinite(l[i]):
                t = (l[i] - ax) / ap
                side = _LOWER
            elif ap > 0.0 and np.isfinite(u[i]):
                t = (u[i] - ax) / ap
                side = _UPPER
            else:
                continue
            if t < 0.0:
                t = 0.0
            if t < alpha:
                alpha = t
                block = i
                bside = side
        if block < 0 and unbounded_dir:
            status = _UNBOUNDED
            break
        x = x + alpha * p
        if block >= 0:
            ws[block] = bside
    return x, ws, status, it, lam


@njit(cache=True, nogil=True)
def _box_active_set(Q, c, lo, hi, x, fix, max_iter, tol):
    """Active set over simple bounds for positive definite Q.

    ``fix[j]`` is 0 (free), -1 (at lo), +1 (at hi) or 2 (lo == hi).  The
    free block is solved by Cholesky each iteration.
    """
    d = Q.shape[0]
    status = _MAXITER
    it = 0
    while it < max_iter:
        it += 1
        g = Q @ x + c
        nf = 0
        for j in range(d):
            if fix[j] == _FREE:
                nf += 1
        F = np.empty(nf, dtype=np.int64)
        k = 0
        for j in range(d):
            if fix[j] == _FREE:
                F[k] = j
                k += 1
        p = np.zeros(d)
        if nf > 0:
            QF = np.empty((nf, nf))
            for a in range(nf):
                for b in range(nf):
                    QF[a, b] = Q[F[a], F[b]]
            L = np.linalg.cholesky(QF)
            y = np.empty(nf)
            for a in range(nf):
                s = -g[F[a]]
                for b in range(a):
                    s -= L[a, b] * y[b]
                y[a] = s / L[a, a]
            z = np.empty(nf)
            for a in range(nf - 1, -1, -1):
                s = y[a]
                for b in range(a + 1, nf):
                    s -= L[b, a] * z[b]
                z[a] = s / L[a, a]
            for a in range(nf):
                p[F[a]] = z[a]
        alpha = 1.0
        block = -1
        bside = 0
        for a in range(nf):
            j = F[a]
            if p[j] < 0.0 and np.isfinite(lo[j]):
                t = (lo[j] - x[j]) / p[j]
                side = _LOWER
            elif p[j] > 0.0 and np.isfinite(hi[j]):
                t = (hi[j] - x[j]) / p[j]
                side = _UPPER
            else:
                continue
            if t < 0.0:
                t = 0.0
            if t < alpha:
                alpha = t
                block = j
                bside = side
        x = x + alpha * p
        if block >= 0:
            fix[block] = bside
            x[block] = lo[block] if bside == _LOWER else hi[block]
            continue
        # subspace minimizer reached: check the signs of the bound multipliers
        g = Q @ x + c
        worst = -1
        wval = tol
        for j in range(d):
            v = 0.0
            if fix[j] == _LOWER:
                v = -g[j]
            elif fix[j] == _UPPER:
                v = g[j]
            if v > wval:
                wval = v
                worst = j
        if worst < 0:
            status = _OPTIMAL
            break
        fix[worst] = _FREE
    return x, fix, status, it


@njit(cache=True, nogil=True)
def friction_fixed_point(Q, b, nvert, mu, fhat, x, fix, max_passes, fp_tol, max_iter, tol):
    """Contact QP with per-vertex friction boxes ``|f_t| <= mu * fhat``.

    Variables are ``[f_0, ..., f_{nvert-1}, closure wrenches]`` with
    ``f_i = (f_x, f_y, f_z)``.  After each solve ``fhat`` is replaced by the
    new normal forces; passes stop once they change by at most
    ``fp_tol * (1 + max fhat)``.  Returns
    ``(x, fix, status, iterations, passes, converged)``.
    """
    d = Q.shape[0]
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    status = _OPTIMAL
    iters = 0
    passes = 0
    converged = False
    while passes < max_passes:
        passes += 1
        for i in range(nvert):
            cap = mu * fhat[i]
            lo[3 * i] = -cap
            lo[3 * i + 1] = -cap
            hi[3 * i] = cap
            hi[3 * i + 1] = cap
            lo[3 * i + 2] = 0.0
        for j in range(d):
            if x[j] < lo[j]:
                x[j] = lo[j]
            elif x[j] > hi[j]:
                x[j] = hi[j]
            if lo[j] == hi[j]:
                fix[j] = _EQUAL
            elif fix[j] == _EQUAL or (fix[j] == _LOWER and x[j] != lo[j]) or (fix[j] == _UPPER and x[j] != hi[j]):
                fix[j] = _FREE
        x, fix, status, n_it = _box_active_set(Q, b, lo, hi, x, fix, max_iter, tol)
        iters += n_it
        if status != _OPTIMAL:
            break
        change = 0.0
        top = 0.0
        for i in range(nvert):
            fz = max(x[3 * i + 2], 0.0)
            change = max(change, abs(fz - fhat[i]))
            fhat[i] = fz
            top = max(top, fz)
        if change <= fp_tol * (1.0 + top):
            converged = True
            break
    return x, fix, status, iters, passes, converged


# --------------------------------------------------------------------------- #


def _bound_rows(A):
    """Column index per row when every row of A has exactly one nonzero, else None."""
    if A.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    nnz = (A != 0.0).sum(axis=1)
    if np.any(nnz != 1):
        return None
    return np.argmax(A != 0.0, axis=1)


def _clip_start(problem, x0, cols, tol):
    """Feasible point for bound-only rows, or (None, certificate)."""
    A, l, u = problem.A, problem.l, problem.u
    d = problem.dim
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    lo_row = np.full(d, -1)
    hi_row = np.full(d, -1)
    for i, j in enumerate(cols):
        a = A[i, j]
        lb, ub = (l[i] / a, u[i] / a) if a > 0 else (u[i] / a, l[i] / a)
        if lb > lo[j]:
            lo[j], lo_row[j] = lb, i
        if ub < hi[j]:
            hi[j], hi_row[j] = ub, i
    gap = lo - hi
    if np.any(gap > tol * (1.0 + np.abs(np.where(np.isfinite(lo), lo, 0.0)))):
        j = int(np.argmax(gap))
        cert = np.zeros(A.shape[0])
        # y_lo a_lo x >= y_lo l, y_hi a_hi x <= y_hi u with the x-parts cancelling
        cert[lo_row[j]] = 1.0 / A[lo_row[j], j]
        cert[hi_row[j]] -= 1.0 / A[hi_row[j], j]
        return None, cert
    x = np.clip(x0, np.minimum(lo, hi), np.maximum(lo, hi))
    crossed = gap > 0.0  # crossed within tolerance: take the midpoint
    x[crossed] = 0.5 * (lo[crossed] + hi[crossed])
    return x, None


def _phase_one(problem, x0, tol, max_iter):
    """Minimize the uniform bound violation t >= 0 from x0."""
    A, l, u = problem.A, problem.l, problem.u
    d, m = problem.dim, A.shape[0]
    rows, lo, hi, origin = [], [], [], []
    for i in range(m):
        if np.isfinite(l[i]):
            rows.append(np.append(A[i], 1.0))
            lo.append(l[i])
            hi.append(np.inf)
            origin.append((i, 1.0))
        if np.isfinite(u[i]):
            rows.append(np.append(A[i], -1.0))
            lo.append(-np.inf)
            hi.append(u[i])
            origin.append((i, 1.0))
    rows.append(np.append(np.zeros(d), 1.0))
    lo.append(0.0)
    hi.append(np.inf)
    A1 = np.array(rows)
    l1, u1 = np.array(lo), np.array(hi)
    delta = 1e-9
    Q1 = np.zeros((d + 1, d + 1))
    Q1[:d, :d] = delta * np.eye(d)
    c1 = np.append(-delta * x0, 1.0)
    viol = np.maximum(np.maximum(l - A @ x0, A @ x0 - u), 0.0)
    t0 = float(viol.max(initial=0.0))
    z0 = np.append(x0, t0)
    ws = np.zeros(A1.shape[0], dtype=np.int64)
    z, ws, status, iters, lam = _active_set(Q1, c1, A1, l1, u1, z0, ws, max_iter, tol)
    cert = np.zeros(m)
    for k, (i, _) in enumerate(origin):
        cert[i] += lam[k]
    return z[:d], float(z[d]), cert, iters


def _independent_rows(A, candidates):
    """Greedy subset of ``candidates`` whose rows of A are linearly independent."""
    keep = []
    for i in candidates:
        trial = keep + [i]
        if np.linalg.matrix_rank(A[trial], tol=1e-10 * max(1.0, np.abs(A[trial]).max())) == len(trial):
            keep.append(i)
    return keep


def kkt_residuals(problem: QpProblem, x, lam) -> dict:
    A, l, u = problem.A, problem.l, problem.u
    Ax = A @ x
    stat = problem.Q @ x + problem.c - A.T @ lam
    primal = np.maximum(np.maximum(l - Ax, Ax - u), 0.0)
    slack = np.where(lam > 0.0, Ax - l, np.where(lam < 0.0, u - Ax, 0.0))
    slack = np.where(np.isfinite(slack), slack, 0.0)
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0)),
        "primal": float(primal.max(initial=0.0)),
        "complementarity": float(np.abs(lam * slack).max(initial=0.0)),
    }


def _describe(ws):
    names = {_LOWER: "lower", _UPPER: "upper", _EQUAL: "equality"}
    return [(int(i), names[int(ws[i])]) for i in np.flatnonzero(ws != _FREE)]


def _is_pd(Q):
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        return False
    return True


def _solve_box(problem, cols, x, working_set, tol, max_iter):
    """Bound-only rows (one per variable at most) with positive definite Q."""
    A, l, u = problem.A, problem.l, problem.u
    d, m = problem.dim, A.shape[0]
    coef = A[np.arange(m), cols]
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    lo[cols] = np.where(coef > 0, l / coef, u / coef)
    hi[cols] = np.where(coef > 0, u / coef, l / coef)
    fix = np.zeros(d, dtype=np.int64)
    fix[lo == hi] = _EQUAL
    if working_set is not None and np.shape(working_set) == (m,):
        for i in np.flatnonzero(np.asarray(working_set) != _FREE):
            j = cols[i]
            if fix[j] == _EQUAL:
                continue
            at_lo = x[j] == lo[j]
            at_hi = x[j] == hi[j]
            lower_row = working_set[i] == _LOWER
            if (lower_row == (coef[i] > 0) and at_lo):
                fix[j] = _LOWER
            elif (lower_row != (coef[i] > 0) and at_hi):
                fix[j] = _UPPER
    x, fix, status, n_it = _box_active_set(problem.Q, problem.c, lo, hi, x, fix, max_iter, tol)
    g = problem.Q @ x + problem.c
    ws = np.zeros(m, dtype=np.int64)
    lam = np.zeros(m)
    for i in range(m):
        j = cols[i]
        if fix[j] == _FREE:
            continue
        if fix[j] == _EQUAL:
            ws[i] = _EQUAL
        elif (fix[j] == _LOWER) == (coef[i] > 0):
            ws[i] = _LOWER
        else:
            ws[i] = _UPPER
        lam[i] = g[j] / coef[i]
    return QpResult(
        x=x,
        status=_STATUS[status],
        active_constraints=_describe(ws),
        multipliers=lam,
        iterations=n_it,
        objective=problem.objective(x),
        kkt=kkt_residuals(problem, x, lam),
        working_set=ws,
    )


def solve_qp(problem: QpProblem, options: dict | None = None, *, x0=None, working_set=None) -> QpResult:
    """Solve ``problem``; ``x0``/``working_set`` warm-start the active-set iteration.

    Options: ``max_iter`` (default ``10 (d + m) + 50``) and ``tol`` (1e-9).
    Raises :class:`BadProblem` for asymmetric Q or crossed bounds.
    """
    problem.check()
    opts = options or {}
    d, m = problem.dim, problem.A.shape[0]
    tol = float(opts.get("tol", 1e-9))
    max_iter = int(opts.get("max_iter", 10 * (d + m) + 50))
    A, l, u = problem.A, problem.l, problem.u
    x_start = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    iters = 0

    cols = _bound_rows(A)
    if cols is not None:
        x, cert = _clip_start(problem, x_start, cols, tol)
        if x is None:
            return QpResult(x_start, QpStatus.INFEASIBLE, [], np.zeros(m), 0, np.nan, certificate=cert)
        if np.unique(cols).shape[0] == cols.shape[0] and _is_pd(problem.Q):
            return _solve_box(problem, cols, x, working_set, tol, max_iter)
    else:
        viol = np.maximum(np.maximum(l - A @ x_start, A @ x_start - u), 0.0)
        if viol.max(initial=0.0) > 0.0:
            x, t, cert, iters = _phase_one(problem, x_start, tol, max_iter)
            scale = 1.0 + max(np.abs(np.where(np.isfinite(l), l, 0.0)).max(initial=0.0),
                              np.abs(np.where(np.isfinite(u), u, 0.0)).max(initial=0.0))
            if t > tol * scale:
                return QpResult(x, QpStatus.INFEASIBLE, [], np.zeros(m), iters, np.nan, certificate=cert)
        else:
            x = x_start

    Ax = A @ x
    ws = np.zeros(m, dtype=np.int64)
    eq = np.flatnonzero(l == u)
    cand = list(eq)
    if working_set is not None:
        prev = np.asarray(working_set)
        if prev.shape == (m,):
            for i in np.flatnonzero(prev != _FREE):
                if l[i] == u[i]:
                    continue
                if prev[i] == _LOWER and abs(Ax[i] - l[i]) <= tol * (1.0 + abs(l[i])):
                    cand.append(int(i))
                elif prev[i] == _UPPER and abs(Ax[i] - u[i]) <= tol * (1.0 + abs(u[i])):
                    cand.append(int(i))
    keep = _independent_rows(A, cand) if cand else []
    for i in keep:
        if l[i] == u[i]:
            ws[i] = _EQUAL
        else:
            ws[i] = int(np.asarray(working_set)[i])

    x, ws, status, n_it, lam = _active_set(problem.Q, problem.c, A, l, u, x, ws, max_iter, tol)
    status = _STATUS[status]
    lam = np.where(ws != _FREE, lam, 0.0)
    return QpResult(
        x=x,
        status=status,
        active_constraints=_describe(ws),
        multipliers=lam,
        iterations=iters + n_it,
        objective=problem.objective(x),
        kkt=kkt_residuals(problem, x, lam),
        working_set=ws,
    )


class ActiveSetSolver:
    """Solver that warm-starts each solve from the previous solution.

    Warm starting only changes the iteration count: the same optimum is
    returned (up to ``tol``) whatever the previous problem was.
    """

    def __init__(self, max_iter: int | None = None, tol: float = 1e-9):
        self.max_iter = max_iter
        self.tol = tol
        self._x = None
        self._ws = None

    def reset(self):
        self._x = None
        self._ws = None

    def solve(self, problem: QpProblem) -> QpResult:
        opts = {"tol": self.tol}
        if self.max_iter is not None:
            opts["max_iter"] = self.max_iter
        x0 = ws = None
        if self._x is not None and self._x.shape == (problem.dim,) and self._ws.shape == (problem.A.shape[0],):
            x0, ws = self._x, self._ws
        res = solve_qp(problem, opts, x0=x0, working_set=ws)
        if res.status is QpStatus.OPTIMAL:
            self._x, self._ws = res.x.copy(), res.working_set.copy()
        else:
            self.reset()
        return res
