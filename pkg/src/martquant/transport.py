"""Exact transport between finitely supported measures.

Wasserstein costs, their martingale-constrained counterparts, martingale
optimal transport values and convex-order (Strassen) feasibility, all as
linear programs over the joint weights ``pi[i, j]``.  In dimension one the
plain Wasserstein problem also has the comonotone (quantile) solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ConvexOrderError
from .lp import LinearProgram, LpError, solve
from .measure import Analytic1DMeasure, DiscreteMeasure

__all__ = [
    "Coupling",
    "MartingaleCoupling",
    "CostSpec",
    "w_p",
    "w_p_analytic_1d",
    "m_p",
    "mot_value",
    "convex_order_feasible",
    "transport_lp",
    "MEAN_TOL",
]

MEAN_TOL = 1e-9
MARGINAL_TOL = 1e-10
MARTINGALE_TOL = 1e-9


def _as2d(points):
    pts = np.asarray(points, dtype=float)
    return pts.reshape(-1, 1) if pts.ndim == 1 else pts


class Coupling:
    """Sparse finitely supported joint law on R^d x R^d.

    Stored as triplets ``(i, j, w)`` indexing ``src_points`` and
    ``dst_points``; rows with equal ``i`` form the kernel ``pi_x``.
    """

    def __init__(self, src_points, dst_points, i, j, w):
        self.src_points = _as2d(src_points)
        self.dst_points = _as2d(dst_points)
        i = np.asarray(i, dtype=int).ravel()
        j = np.asarray(j, dtype=int).ravel()
        w = np.asarray(w, dtype=float).ravel()
        if not (i.shape == j.shape == w.shape):
            raise ValueError("triplet arrays must have equal length")
        if np.any(w < -1e-12):
            raise ValueError("negative coupling weight")
        keep = w > 0
        i, j, w = i[keep], j[keep], w[keep]
        # merge repeated (i, j) pairs
        key = i * len(self.dst_points) + j
        uniq, inv = np.unique(key, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, w)
        self.i = uniq // len(self.dst_points)
        self.j = uniq % len(self.dst_points)
        self.w = merged
        self.src_weights = np.bincount(self.i, weights=self.w, minlength=len(self.src_points))
        self.dst_weights = np.bincount(self.j, weights=self.w, minlength=len(self.dst_points))

    @classmethod
    def from_dense(cls, src_points, dst_points, plan, threshold=0.0):
        plan = np.asarray(plan, dtype=float)
        i, j = np.nonzero(plan > threshold)
        return cls(src_points, dst_points, i, j, plan[i, j])

    @property
    def dim(self):
        return self.src_points.shape[1]

    def dense(self):
        out = np.zeros((len(self.src_points), len(self.dst_points)))
        np.add.at(out, (self.i, self.j), self.w)
        return out

    def first_marginal(self) -> DiscreteMeasure:
        keep = self.src_weights > 0
        return DiscreteMeasure(self.src_points[keep], self.src_weights[keep])

    def second_marginal(self) -> DiscreteMeasure:
        keep = self.dst_weights > 0
        return DiscreteMeasure(self.dst_points[keep], self.dst_weights[keep])

    def kernel(self, src_index):
        """``(dst indices, probabilities)`` of the conditional law given source atom ``src_index``."""
        sel = self.i == src_index
        return self.j[sel], self.w[sel] / self.w[sel].sum()

    def kernel_measure(self, src_index) -> DiscreteMeasure:
        cols, probs = self.kernel(src_index)
        return DiscreteMeasure(self.dst_points[cols], probs)

    def as_measure(self) -> DiscreteMeasure:
        """The coupling as a measure on R^{2d} (stacked ``(x, y)``)."""
        pts = np.hstack([self.src_points[self.i], self.dst_points[self.j]])
        return DiscreteMeasure(pts, self.w)

    def integrate(self, cost):
        """``sum pi_ij cost(x_i, y_j)``; ``cost`` takes two ``(k, d)`` arrays row-wise."""
        return float(self.w @ cost(self.src_points[self.i], self.dst_points[self.j]))

    def marginal_residual(self, mu: DiscreteMeasure, nu: DiscreteMeasure):
        """Max deviation of the marginals from ``mu`` and ``nu`` (points matched exactly)."""
        return max(_marginal_gap(self.src_points, self.src_weights, mu),
                   _marginal_gap(self.dst_points, self.dst_weights, nu))

    def martingale_residuals(self):
        """``|sum_j pi_ij (y_j - x_i)|`` per source atom."""
        diff = self.w[:, None] * (self.dst_points[self.j] - self.src_points[self.i])
        out = np.zeros_like(self.src_points)
        np.add.at(out, self.i, diff)
        return np.linalg.norm(out, axis=1)

    def is_martingale(self, tol=MARTINGALE_TOL):
        scale = 1.0 + np.linalg.norm(self.src_points, axis=1)
        return bool(np.all(self.martingale_residuals() <= tol * scale))

    def __repr__(self):
        return f"{type(self).__name__}(n_src={len(self.src_points)}, n_dst={len(self.dst_points)}, nnz={len(self.w)})"


def _marginal_gap(points, weights, m):
    if len(points) != m.size:
        keep = weights > MARGINAL_TOL
        points, weights = points[keep], weights[keep]
        if len(points) != m.size:
            return np.inf
    order = np.lexsort(points.T[::-1])
    if not np.allclose(points[order], m.points, rtol=0, atol=1e-12):
        return np.inf
    return float(np.max(np.abs(weights[order] - m.weights)))


class MartingaleCoupling(Coupling):
    """Coupling whose kernels have barycenter equal to their source point."""

    def __init__(self, src_points, dst_points, i, j, w, check=True, tol=MARTINGALE_TOL):
        super().__init__(src_points, dst_points, i, j, w)
        if check and not self.is_martingale(tol):
            raise ValueError(f"martingale residual {self.martingale_residuals().max():.3e} exceeds tolerance")

    @classmethod
    def from_coupling(cls, pi: Coupling, check=True, tol=MARTINGALE_TOL):
        return cls(pi.src_points, pi.dst_points, pi.i, pi.j, pi.w, check=check, tol=tol)


def pairwise_cost(x, y, p):
    diff = _as2d(x)[:, None, :] - _as2d(y)[None, :, :]
    return np.linalg.norm(diff, axis=2) ** p


def _transport_constraints(n, m, x=None, y=None):
    rows = sp.kron(sp.identity(n), np.ones((1, m)))
    cols = sp.kron(np.ones((1, n)), sp.identity(m))
    blocks = [rows, cols]
    if x is not None:
        for k in range(x.shape[1]):
            # sum_j pi_ij (y_jk - x_ik) = 0
            vals = (y[None, :, k] - x[:, k, None]).ravel()
            blocks.append(sp.csr_matrix((vals, (np.repeat(np.arange(n), m), np.arange(n * m))), shape=(n, n * m)))
    return sp.vstack(blocks, format="csc")


def transport_lp(a, b, cost, martingale_points=None):
    """Solve the (optionally martingale-constrained) transport LP.

    ``cost`` is an ``(n, m)`` matrix; ``martingale_points`` is ``(x, y)``
    when the kernel barycenters must match the source points.  Returns
    ``(LpSolution, plan)`` with ``plan`` the dense ``(n, m)`` optimizer or
    ``None`` when infeasible.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    x = y = None
    rhs = [a, b]
    if martingale_points is not None:
        x, y = (_as2d(v) for v in martingale_points)
        rhs.append(np.zeros(n * x.shape[1]))
    A = _transport_constraints(n, m, x, y)
    sol = solve(LinearProgram(cost.ravel(), A, np.concatenate(rhs)))
    if not sol.optimal:
        return sol, None
    plan = np.clip(sol.x, 0.0, None).reshape(n, m)
    plan[plan < 1e-15] = 0.0
    return sol, plan


def _quantile_coupling(x, a, y, b):
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    ca /= ca[-1]
    cb /= cb[-1]
    u = np.union1d(ca, cb)
    u = u[u > 0]
    lo = np.concatenate([[0.0], u[:-1]])
    mass = u - lo
    mid = 0.5 * (lo + u)
    i = np.minimum(np.searchsorted(ca, mid), len(x) - 1)
    j = np.minimum(np.searchsorted(cb, mid), len(y) - 1)
    keep = mass > 0
    return i[keep], j[keep], mass[keep]


def w_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 2.0, method: str = "auto"):
    """Optimal transport cost ``W_p(mu, nu)^p`` and an optimal coupling.

    In dimension one ``method='auto'`` uses the comonotone coupling;
    ``method='lp'`` forces the linear program.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    if p < 1:
        raise ValueError("p must be >= 1")
    if mu.dim == 1 and method in ("auto", "quantile"):
        i, j, w = _quantile_coupling(mu.x, mu.weights, nu.x, nu.weights)
        pi = Coupling(mu.points, nu.points, i, j, w)
        cost = float(w @ np.abs(mu.x[i] - nu.x[j]) ** p)
        return cost, pi
    if method not in ("auto", "lp"):
        raise ValueError(f"unknown method {method!r}")
    C = pairwise_cost(mu.points, nu.points, p)
    sol, plan = transport_lp(mu.weights, nu.weights, C)
    if plan is None:
        raise LpError(f"transport LP returned {sol.status}", sol.iterations)
    return float(sol.objective), Coupling.from_dense(mu.points, nu.points, plan)


def w_p_analytic_1d(m: Analytic1DMeasure, nu: DiscreteMeasure, p: float = 2.0) -> float:
    """``W_p(m, nu)^p`` between a closed-form 1D law and a discrete one, via the quantile coupling."""
    u = np.cumsum(nu.weights)
    u /= u[-1]
    edges = m._quantile_closed(np.concatenate([[0.0], u]))
    return float(sum(m.abs_shifted_moment(p, lo, hi, y) for lo, hi, y in zip(edges[:-1], edges[1:], nu.x)))


def _check_means(mu, nu):
    gap = np.max(np.abs(np.atleast_1d(mu.mean()) - np.atleast_1d(nu.mean())))
    if gap > MEAN_TOL:
        raise ConvexOrderError(f"means differ by {gap:.3e}: no martingale coupling exists (Strassen)")


def _martingale_solve(mu, nu, C):
    _check_means(mu, nu)
    sol, plan = transport_lp(mu.weights, nu.weights, C, (mu.points, nu.points))
    if plan is None:
        if sol.status == "infeasible":
            raise ConvexOrderError("martingale transport LP is infeasible: the measures are not in convex order (Strassen)")
        raise LpError(f"martingale LP returned {sol.status}", sol.iterations)
    pi = MartingaleCoupling.from_coupling(Coupling.from_dense(mu.points, nu.points, plan), check=False)
    return sol, pi


def m_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 2.0):
    """``M_p(mu, nu)^p``: the ``|y - x|^p`` cost minimized over martingale couplings only.

    Raises :class:`ConvexOrderError` when ``mu`` is not dominated by ``nu``.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    sol, pi = _martingale_solve(mu, nu, pairwise_cost(mu.points, nu.points, p))
    return float(sol.objective), pi


def convex_order_feasible(mu: DiscreteMeasure, nu: DiscreteMeasure) -> bool:
    """Whether some martingale coupling of ``mu`` and ``nu`` exists, i.e. ``mu <=_cvx nu``."""
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    try:
        _martingale_solve(mu, nu, np.zeros((mu.size, nu.size)))
    except ConvexOrderError:
        return False
    return True


@dataclass(frozen=True)
class CostSpec:
    """Cost ``c(x, y)`` on support pairs.

    kinds: ``abs_power`` ``|y-x|^p``; ``pos_power`` ``((y-x)^+)^p`` and
    ``neg_power`` ``((x-y)^+)^p`` (1D); ``scalar_product`` ``x.y``;
    ``matrix`` with explicit ``values``.
    """

    kind: str = "abs_power"
    p: float = 1.0
    values: tuple | None = field(default=None, compare=False)

    KINDS = ("abs_power", "pos_power", "neg_power", "scalar_product", "matrix")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "matrix" and self.values is None:
            raise ValueError("matrix cost needs values")

    def matrix(self, x, y):
        x, y = _as2d(x), _as2d(y)
        if self.kind == "abs_power":
            return pairwise_cost(x, y, self.p)
        if self.kind == "scalar_product":
            return x @ y.T
        if self.kind == "matrix":
            M = np.asarray(self.values, dtype=float)
            if M.shape != (len(x), len(y)):
                raise ValueError(f"cost matrix shape {M.shape} does not match supports {(len(x), len(y))}")
            return M
        if x.shape[1] != 1:
            raise ValueError(f"{self.kind} is a 1D cost")
        diff = y[None, :, 0] - x[:, 0, None]
        if self.kind == "neg_power":
            diff = -diff
        return np.maximum(diff, 0.0) ** self.p

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "matrix":
            out["values"] = np.asarray(self.values).tolist()
        elif self.kind != "scalar_product":
            out["p"] = self.p
        return out

    @classmethod
    def from_dict(cls, d):
        values = d.get("values")
        if values is not None:
            values = tuple(tuple(float(v) for v in row) for row in values)
        return cls(d["kind"], float(d.get("p", 1.0)), values)


def mot_value(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec | np.ndarray, upper: bool = False):
    """Martingale optimal transport value ``V_c(mu, nu)`` and an optimizer.

    With ``upper=True`` returns ``-V_{-c}(mu, nu)``, the largest expected
    cost over martingale couplings.
    """
    C = cost.matrix(mu.points, nu.points) if isinstance(cost, CostSpec) else np.asarray(cost, dtype=float)
    sign = -1.0 if upper else 1.0
    sol, pi = _martingale_solve(mu, nu, sign * C)
    return sign * float(sol.objective), pi
