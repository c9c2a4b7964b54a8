"""Bounded-variable revised simplex for equality-form linear programs.

Solves

    min c.x  s.t.  A x = b,  lower <= x <= upper

with a dense explicit basis inverse (rank-one updates, periodic
refactorization) and a sparse constraint matrix.  Pricing starts with
Dantzig's rule and falls back to Bland's rule once the iteration budget
``3 * (rows + cols)`` is spent or the objective stalls, which rules out
cycling on the heavily degenerate transport bases this package produces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = ["LinearProgram", "LpSolution", "LpError", "solve"]

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-11
REFACTOR_EVERY = 64


class LpError(RuntimeError):
    """Numerical breakdown or iteration limit inside the simplex."""

    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, c, A, b, lower=None, upper=None):
        c = np.asarray(c, dtype=float).ravel()
        A = sp.csc_matrix(A, dtype=float)
        b = np.asarray(b, dtype=float).ravel()
        n = c.size
        lower = np.zeros(n) if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
        upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
        if A.shape != (b.size, n):
            raise ValueError(f"constraint matrix has shape {A.shape}, expected {(b.size, n)}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b)) and np.all(np.isfinite(A.data))):
            raise ValueError("objective, matrix and right-hand side must be finite")
        if np.any(lower > upper) or np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ValueError("inconsistent variable bounds")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def shape(self):
        return self.A.shape


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    iterations: int
    reduced_costs: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == "optimal"


class _Simplex:
    """Single-use solver on the standardized problem 0 <= x <= u."""

    def __init__(self, A, b, c, u, max_iter):
        m, n = A.shape
        self.m, self.n = m, n
        self.A = sp.hstack([A, sp.identity(m, format="csc")], format="csc")
        self.AT = self.A.T.tocsr()
        self.b = b
        self.c_real = np.concatenate([c, np.zeros(m)])
        self.u = np.concatenate([u, np.full(m, np.inf)])
        self.basis = np.arange(n, n + m)
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(n + m, dtype=bool)
        self.Binv = np.eye(m)
        self.xB = b.copy()
        self.iterations = 0
        self.max_iter = max_iter
        self.bland = False
        self.dantzig_budget = 3 * (m + n)
        self.since_refactor = 0

    def _column(self, j):
        col = np.zeros(self.m)
        start, end = self.A.indptr[j], self.A.indptr[j + 1]
        col[self.A.indices[start:end]] = self.A.data[start:end]
        return col

    def _refactor(self):
        B = self.A[:, self.basis].toarray()
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise LpError("singular basis", self.iterations) from exc
        xN = np.where(self.at_upper & ~self.is_basic, self.u, 0.0)
        xN[~np.isfinite(xN)] = 0.0
        self.xB = self.Binv @ (self.b - self.A @ xN)
        self.since_refactor = 0

    def x_full(self):
        x = np.where(self.at_upper, self.u, 0.0)
        x[~np.isfinite(x)] = 0.0
        x[self.basis] = self.xB
        return x

    def run(self, cost):
        """Iterate to optimality for ``cost``; returns 'optimal' or 'unbounded'."""
        cscale = max(1.0, float(np.max(np.abs(cost))) if cost.size else 1.0)
        opt_tol = FEAS_TOL * cscale
        best_obj = np.inf
        stall = 0
        stall_limit = max(200, 5 * self.m)
        while True:
            if self.iterations >= self.max_iter:
                raise LpError("iteration limit reached", self.iterations)
            if self.since_refactor >= REFACTOR_EVERY:
                self._refactor()
            if not self.bland and self.iterations >= self.dantzig_budget:
                self.bland = True
            y = cost[self.basis] @ self.Binv
            d = cost - self.AT @ y
            movable = ~self.is_basic & (self.u > 0)
            improving = movable & np.where(self.at_upper, d > opt_tol, d < -opt_tol)
            candidates = np.flatnonzero(improving)
            if candidates.size == 0:
                return "optimal"
            if self.bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(d[candidates]))])
            s = -1.0 if self.at_upper[j] else 1.0
            alpha = self.Binv @ self._column(j)
            delta = -s * alpha
            uB = self.u[self.basis]
            theta = np.full(self.m, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            theta[dec] = np.maximum(self.xB[dec], 0.0) / -delta[dec]
            with np.errstate(invalid="ignore"):
                theta[inc] = np.maximum(uB[inc] - self.xB[inc], 0.0) / delta[inc]
            theta_min = float(np.min(theta)) if self.m else np.inf
            flip = self.u[j]
            if not np.isfinite(theta_min) and not np.isfinite(flip):
                return "unbounded"
            self.iterations += 1
            if flip <= theta_min:
                self.xB = self.xB + flip * delta
                self.at_upper[j] = not self.at_upper[j]
                step = flip
            else:
                ties = np.flatnonzero(theta <= theta_min + 1e-12 * (1.0 + theta_min))
                if self.bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                step = theta[r]
                leaving = self.basis[r]
                leaves_upper = bool(inc[r])
                self.xB = self.xB + step * delta
                self.xB[r] = step if s > 0 else self.u[j] - step
                # rank-one update of the basis inverse
                piv = alpha[r]
                row = self.Binv[r] / piv
                self.Binv -= np.outer(alpha, row)
                self.Binv[r] = row
                self.basis[r] = j
                self.is_basic[j] = True
                self.is_basic[leaving] = False
                self.at_upper[j] = False
                self.at_upper[leaving] = leaves_upper and np.isfinite(self.u[leaving])
                self.since_refactor += 1
            obj = float(cost @ self.x_full()) if step > 0 else best_obj
            if obj < best_obj - 1e-12 * (1.0 + abs(best_obj) if np.isfinite(best_obj) else 1.0):
                best_obj = obj
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    self.bland = True


def solve(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` to optimality, or report infeasibility / unboundedness.

    Deterministic: the same input always follows the same pivot sequence.
    Raises :class:`LpError` on numerical breakdown or when ``max_iter``
    pivots are exceeded.
    """
    A = lp.A
    m, n = A.shape
    lower, upper = lp.lower, lp.upper

    # Map every variable onto nonnegative standardized columns:
    # finite lower -> shift; only finite upper -> reflect; free -> split.
    free = ~np.isfinite(lower) & ~np.isfinite(upper)
    reflect = ~np.isfinite(lower) & np.isfinite(upper)
    cols = [A]
    if np.any(free):
        cols.append(-A[:, np.flatnonzero(free)])
    As = sp.hstack(cols, format="csc") if len(cols) > 1 else A.copy()
    sign = np.where(reflect, -1.0, 1.0)
    As = As @ sp.diags(np.concatenate([sign, np.ones(int(free.sum()))]))
    shift = np.where(np.isfinite(lower), lower, np.where(reflect, upper, 0.0))
    b = lp.b - A @ shift
    cs = np.concatenate([lp.c * sign, -lp.c[free]])
    us = np.concatenate([np.where(np.isfinite(lower), upper - lower, np.inf), np.full(int(free.sum()), np.inf)])
    row_sign = np.where(b < 0, -1.0, 1.0)
    As = sp.diags(row_sign) @ As
    b = b * row_sign
    ns = As.shape[1]

    if max_iter is None:
        max_iter = 50 * (m + ns) + 1000
    solver = _Simplex(sp.csc_matrix(As), b, cs, us, max_iter)

    phase1 = np.concatenate([np.zeros(ns), np.ones(m)])
    status = solver.run(phase1)
    solver._refactor()
    infeas = float(np.sum(solver.x_full()[ns:]))
    if status != "optimal" or infeas > FEAS_TOL * (1.0 + float(np.max(np.abs(b), initial=0.0))) * max(1, m):
        return LpSolution("infeasible", None, np.nan, None, solver.iterations,
                          diagnostics={"infeasibility": infeas})

    # artificials are pinned at zero for phase 2
    solver.u[ns:] = 0.0
    solver.at_upper[ns:] = False
    status = solver.run(solver.c_real)
    solver._refactor()
    if status == "unbounded":
        return LpSolution("unbounded", None, -np.inf, None, solver.iterations)

    xs = solver.x_full()[:ns]
    xs = np.clip(xs, 0.0, us)
    x = shift + sign * xs[:n]
    if np.any(free):
        x[free] -= xs[n:]
    y_std = solver.c_real[solver.basis] @ solver.Binv
    y = y_std * row_sign
    reduced = lp.c - A.T @ y
    obj = float(lp.c @ x)
    diag = _certificate(lp, x, y, reduced, obj)
    return LpSolution("optimal", x, obj, y, solver.iterations, reduced, diag)


def _certificate(lp, x, y, reduced, obj):
    """Primal residual, complementary slackness and duality gap."""
    primal_res = float(np.max(np.abs(lp.A @ x - lp.b), initial=0.0))
    bound_res = float(max(np.max(lp.lower - x, initial=0.0), np.max(x - lp.upper, initial=0.0)))
    slack_lo = x - lp.lower
    slack_up = lp.upper - x
    # a reduced cost of the wrong sign is only allowed against an active bound
    viol_pos = np.where(slack_up > FEAS_TOL, np.maximum(-reduced, 0.0), 0.0)
    viol_neg = np.where(slack_lo > FEAS_TOL, np.maximum(reduced, 0.0), 0.0)
    cs = float(max(np.max(viol_pos, initial=0.0), np.max(viol_neg, initial=0.0)))
    dtol = 1e-12 * max(1.0, float(np.max(np.abs(lp.c), initial=0.0)))
    pos = reduced > dtol
    neg = reduced < -dtol
    with np.errstate(invalid="ignore"):
        dual_obj = float(lp.b @ y + np.sum(reduced[pos] * lp.lower[pos]) + np.sum(reduced[neg] * lp.upper[neg]))
    gap = abs(obj - dual_obj) if np.isfinite(dual_obj) else np.inf
    return {"primal_residual": max(primal_res, bound_res), "complementary_slackness": cs,
            "duality_gap": gap, "dual_objective": dual_obj}
