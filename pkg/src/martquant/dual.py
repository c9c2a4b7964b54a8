"""Dual (Delaunay) quantization.

A point inside the hull of a grid is split at random onto grid points so
that the split has the point as its mean.  In 1D the split is linear
interpolation between the two bracketing grid points.  The pushforward
dominates the input law in convex order, and the expected ``|split - x|^p``
is the dual distortion.

Grid optimization is 1D only:
* quadratic case: minimize the second moment of the pushforward with the
  endpoints pinned at the support.  Discrete laws use an exact dynamic
  program over atoms, closed-form laws coordinate descent plus Newton.
* general ``p``: derivative-free coordinate search on the split distortion.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq, minimize_scalar

from .exceptions import ConvergenceError
from .lp import LinearProgram, solve
from .measure import Analytic1DMeasure, DiscreteMeasure
from .primal import Quantizer
from .transport import Coupling

__all__ = [
    "SplittingKernel",
    "split_1d",
    "dual_quantize_1d",
    "dual_distortion_1d",
    "optimal_dual_1d_quadratic",
    "optimal_dual_1d",
    "dual_distortion_lp",
    "HULL_TOL",
]

HULL_TOL = 1e-12


class SplittingKernel:
    """Martingale kernel from source points onto a grid.

    ``rows[i] = (cols, w)``: source ``sources[i]`` is sent to
    ``grid.points[cols]`` with probabilities ``w`` and mean ``sources[i]``.
    """

    def __init__(self, grid: Quantizer, sources, rows):
        self.grid = grid if isinstance(grid, Quantizer) else Quantizer(grid)
        src = np.asarray(sources, dtype=float)
        self.sources = src.reshape(-1, self.grid.dim) if src.size else np.zeros((0, self.grid.dim))
        self.rows = [(np.asarray(c, dtype=int), np.asarray(w, dtype=float)) for c, w in rows]
        if len(self.rows) != len(self.sources):
            raise ValueError("one row per source point is required")

    def __len__(self):
        return len(self.rows)

    def row(self, i):
        return self.rows[i]

    def split(self, x):
        """Row for an arbitrary point (1D grids only)."""
        return split_1d(self.grid, x)

    def row_sums(self):
        return np.array([w.sum() for _, w in self.rows])

    def barycenter_residuals(self):
        g = self.grid.points
        return np.array([np.linalg.norm(w @ g[c] - s) for (c, w), s in zip(self.rows, self.sources)])

    def as_coupling(self, weights) -> Coupling:
        """Joint law of (source, split) when the sources carry ``weights``."""
        i = np.concatenate([np.full(len(c), k) for k, (c, _) in enumerate(self.rows)])
        j = np.concatenate([c for c, _ in self.rows])
        w = np.concatenate([weights[k] * p for k, (_, p) in enumerate(self.rows)])
        return Coupling(self.sources, self.grid.points, i, j, w)

    def to_dict(self):
        return {
            "grid": self.grid.points.tolist(),
            "sources": self.sources.tolist(),
            "rows": [{"src": k, "cols": c.tolist(), "w": w.tolist()} for k, (c, w) in enumerate(self.rows)],
        }

    @classmethod
    def from_dict(cls, d):
        grid = Quantizer(d["grid"])
        rows = sorted(d["rows"], key=lambda r: r["src"])
        return cls(grid, d.get("sources", np.zeros((0, grid.dim))), [(r["cols"], r["w"]) for r in rows])


def _bracket(gx, x):
    lo, hi = gx[0], gx[-1]
    tol = HULL_TOL * (1.0 + max(abs(lo), abs(hi)))
    x = np.asarray(x, dtype=float)
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise ValueError(f"point outside the grid hull [{lo}, {hi}]")
    x = np.clip(x, lo, hi)
    i = np.clip(np.searchsorted(gx, x, side="right") - 1, 0, len(gx) - 2)
    h = gx[i + 1] - gx[i]
    right = (x - gx[i]) / h
    return i, 1.0 - right, right


def split_1d(grid: Quantizer, x: float):
    """``((i, i+1), (w_i, w_{i+1}))`` with ``w_i x_i + w_{i+1} x_{i+1} = x``.

    A point on the grid gets unit mass on itself (the other weight is 0);
    a single-point grid only splits its own point.
    """
    gx = grid.x
    if len(gx) == 1:
        if abs(float(x) - gx[0]) > HULL_TOL * (1.0 + abs(gx[0])):
            raise ValueError("point outside the grid hull")
        return (0,), (1.0,)
    i, wl, wr = _bracket(gx, float(x))
    i = int(i)
    return (i, i + 1), (float(wl), float(wr))


def _split_discrete(mu: DiscreteMeasure, gx):
    if len(gx) == 1:
        if np.any(np.abs(mu.x - gx[0]) > HULL_TOL * (1.0 + abs(gx[0]))):
            raise ValueError("point outside the grid hull")
        z = np.zeros(mu.size, dtype=int)
        return z, np.ones(mu.size), z, np.zeros(mu.size)
    i, wl, wr = _bracket(gx, mu.x)
    return i, wl, i + 1, wr


def _cell_moments(mu: Analytic1DMeasure, gx):
    lo, hi = mu.support
    if gx[0] > lo + HULL_TOL or gx[-1] < hi - HULL_TOL:
        raise ValueError(f"support [{lo}, {hi}] not inside the grid hull [{gx[0]}, {gx[-1]}]")
    a = np.clip(gx[:-1], lo, hi)
    b = np.clip(gx[1:], lo, hi)
    return a, b


def dual_distortion_1d(mu, grid: Quantizer, p: float = 2.0) -> float:
    """``d_p(mu, grid)^p``: expected ``|split(X) - X|^p`` under linear-interpolation splitting."""
    if p < 1:
        raise ValueError("p must be >= 1")
    gx = grid.x
    if isinstance(mu, Analytic1DMeasure):
        if len(gx) == 1:
            raise ValueError("a closed-form law cannot sit on a single point")
        a, b = _cell_moments(mu, gx)
        total = 0.0
        for lo, hi, x0, x1 in zip(a, b, gx[:-1], gx[1:]):
            if hi <= lo:
                continue
            h = x1 - x0
            # (x1-t)/h |t-x0|^p + (t-x0)/h |x1-t|^p integrated over the cell
            total += (h * (mu.abs_shifted_moment(p, lo, hi, x0) + mu.abs_shifted_moment(p, lo, hi, x1))
                      - mu.abs_shifted_moment(p + 1, lo, hi, x0) - mu.abs_shifted_moment(p + 1, lo, hi, x1)) / h
        return float(total)
    il, wl, ir, wr = _split_discrete(mu, gx)
    cost = wl * np.abs(mu.x - gx[il]) ** p + wr * np.abs(gx[ir] - mu.x) ** p
    return float(mu.weights @ cost)


def dual_quantize_1d(mu, grid: Quantizer, p: float = 2.0):
    """Pushforward of ``mu`` through the splitting kernel, the kernel, and ``d_p^p``.

    For a closed-form law the kernel has no source rows (use ``kernel.split``).
    """
    gx = grid.x
    n = len(gx)
    if isinstance(mu, Analytic1DMeasure):
        if n == 1:
            raise ValueError("a closed-form law cannot sit on a single point")
        a, b = _cell_moments(mu, gx)
        h = gx[1:] - gx[:-1]
        to_left = -mu.shifted_moment(1, a, b, gx[1:]) / h   # int (x_{i+1} - t)/h
        to_right = mu.shifted_moment(1, a, b, gx[:-1]) / h  # int (t - x_i)/h
        w = np.zeros(n)
        w[:-1] += to_left
        w[1:] += to_right
        w = np.clip(w, 0.0, None)
        keep = w > 0
        push = DiscreteMeasure(gx[keep], w[keep] / w.sum())
        return push, SplittingKernel(grid, [], []), dual_distortion_1d(mu, grid, p)
    il, wl, ir, wr = _split_discrete(mu, gx)
    w = np.bincount(il, weights=mu.weights * wl, minlength=n) + np.bincount(ir, weights=mu.weights * wr, minlength=n)
    rows = []
    for k in range(mu.size):
        cols, ws = (il[k], ir[k]), (wl[k], wr[k])
        sel = [t for t in range(2) if ws[t] > 0]
        rows.append(([cols[t] for t in sel], [ws[t] for t in sel]))
    keep = w > 0
    push = DiscreteMeasure(gx[keep], w[keep] / w[keep].sum())
    cost = wl * np.abs(mu.x - gx[il]) ** p + wr * np.abs(gx[ir] - mu.x) ** p
    return push, SplittingKernel(grid, mu.points, rows), float(mu.weights @ cost)


# --- quadratic grid search ------------------------------------------------


def _support(mu, support):
    if support is not None:
        lo, hi = float(support[0]), float(support[1])
        if isinstance(mu, DiscreteMeasure) and (mu.x[0] < lo or mu.x[-1] > hi):
            raise ValueError("declared support does not contain the atoms")
        return lo, hi
    if isinstance(mu, Analytic1DMeasure):
        return mu.support
    return float(mu.x[0]), float(mu.x[-1])


def _dp_dual_quadratic(nodes, weights, n):
    """Exact optimal grid of ``n`` points among ``nodes`` (first and last forced).

    Cell ``(x_i, x_j]`` costs ``(x_i + x_j) S1 - x_i x_j S0`` (split second
    moment).  ``f_k(j)``: best cost of ``k`` grid points ending at node ``j``.
    """
    m = len(nodes)
    P0 = np.concatenate([[0.0], np.cumsum(weights)])
    P1 = np.concatenate([[0.0], np.cumsum(weights * nodes)])
    # node j covers atoms (i, j]: sums P[j+1] - P[i+1]
    S0 = P0[None, 1:] - P0[1:, None]
    S1 = P1[None, 1:] - P1[1:, None]
    C = (nodes[:, None] + nodes[None, :]) * S1 - np.outer(nodes, nodes) * S0
    C[np.tril_indices(m)] = np.inf
    f = np.full(m, np.inf)
    f[0] = weights[0] * nodes[0] ** 2
    parents = []
    for _ in range(1, n):
        tot = f[:, None] + C
        arg = np.argmin(tot, axis=0)
        f = tot[arg, np.arange(m)]
        parents.append(arg)
    path = [m - 1]
    for arg in reversed(parents):
        path.append(int(arg[path[-1]]))
    return np.array(path[::-1]), float(f[-1])


def _quadratic_objective(mu: Analytic1DMeasure, gx):
    """Second moment of the split pushforward on grid ``gx``."""
    a, b = gx[:-1], gx[1:]
    m0 = mu.partial_moment(0, a, b)
    m1 = mu.partial_moment(1, a, b)
    return float(np.sum((a + b) * m1 - a * b * m0))


def _grad_k(mu, gx, k, xk):
    """Derivative of the objective in interior coordinate ``k`` at value ``xk``."""
    left = mu.shifted_moment(1, gx[k - 1], xk, gx[k - 1])
    right = mu.shifted_moment(1, xk, gx[k + 1], gx[k + 1])
    return float(left + right)


def _gradient(mu, gx):
    a, b = gx[:-1], gx[1:]
    into_left = mu.shifted_moment(1, a, b, a)   # int (t - x_{k-1}) over [x_{k-1}, x_k]
    into_right = mu.shifted_moment(1, a, b, b)  # int (t - x_{k+1}) over [x_k, x_{k+1}]
    return into_left[:-1] + into_right[1:]


def _coordinate_sweep(mu, gx):
    move = 0.0
    for k in range(1, len(gx) - 1):
        lo, hi = gx[k - 1], gx[k + 1]
        glo, ghi = _grad_k(mu, gx, k, lo), _grad_k(mu, gx, k, hi)
        if glo >= 0:
            new = lo
        elif ghi <= 0:
            new = hi
        else:
            new = brentq(lambda t: _grad_k(mu, gx, k, t), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        # keep the grid strictly increasing
        eps = 1e-12 * (hi - lo)
        new = min(max(new, lo + eps), hi - eps)
        move = max(move, abs(new - gx[k]))
        gx[k] = new
    return move


def _newton_dual(mu, gx, tol, max_steps=50):
    gx = gx.copy()
    obj = _quadratic_objective(mu, gx)
    for _ in range(max_steps):
        g = _gradient(mu, gx)
        if np.max(np.abs(g)) <= tol:
            return gx
        inner = gx[1:-1]
        diag = (gx[2:] - gx[:-2]) * mu.pdf(inner)
        off = -mu.partial_moment(0, gx[1:-2], gx[2:-1])
        ab = np.zeros((3, len(inner)))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        try:
            step = solve_banded((1, 1), ab, g)
        except (np.linalg.LinAlgError, ValueError):
            return None
        t = 1.0
        while t > 1e-4:
            cand = gx.copy()
            cand[1:-1] = inner - t * step
            if np.all(np.diff(cand) > 0) and _quadratic_objective(mu, cand) <= obj + 1e-15:
                break
            t /= 2
        else:
            return None
        gx = cand
        obj = _quadratic_objective(mu, gx)
    return gx if np.max(np.abs(_gradient(mu, gx))) <= tol else None


def _descend(mu, gx, tol, max_sweeps):
    newton_at = 1e-2
    for _ in range(max_sweeps):
        move = _coordinate_sweep(mu, gx)
        if move <= tol:
            return gx
        if move <= newton_at:
            polished = _newton_dual(mu, gx, tol)
            if polished is not None:
                return polished
            newton_at = move / 10
    raise ConvergenceError("dual grid coordinate descent did not converge", last=Quantizer(gx))


def optimal_dual_1d_quadratic(mu, n: int, tol: float = 1e-12, support=None, seed: int = 0,
                              n_starts: int = 5, max_sweeps: int = 100_000):
    """Quadratic optimal ``n``-point dual grid of a compactly supported 1D law.

    The endpoints sit at the support bounds (``support`` may widen them for
    a discrete law).  Returns ``(grid, pushforward, d_2^2)`` where
    ``d_2^2`` is the second-moment gain of the pushforward.
    """
    if n < 2:
        raise ValueError("a dual grid needs n >= 2")
    lo, hi = _support(mu, support)
    if not hi > lo:
        raise ValueError("degenerate support: a single atom is its own dual quantization")
    if isinstance(mu, DiscreteMeasure):
        if mu.dim != 1:
            raise ValueError("grid optimization is one-dimensional")
        nodes, w = mu.x, mu.weights
        if nodes[0] > lo:
            nodes, w = np.concatenate([[lo], nodes]), np.concatenate([[0.0], w])
        if nodes[-1] < hi:
            nodes, w = np.concatenate([nodes, [hi]]), np.concatenate([w, [0.0]])
        if n >= len(nodes):
            gx = nodes
        else:
            path, _ = _dp_dual_quadratic(nodes, w, n)
            gx = nodes[path]
        grid = Quantizer(gx)
        push, _, d2 = dual_quantize_1d(mu, grid, 2.0)
        return grid, push, d2
    if support is not None and (lo, hi) != tuple(mu.support):
        raise ValueError("closed-form laws use their own support")
    rng = np.random.default_rng(seed)
    starts = [mu.quantile(np.arange(1, n - 1) / (n - 1))]
    for _ in range(max(0, n_starts - 1)):
        starts.append(np.sort(mu.quantile(rng.uniform(0.02, 0.98, size=n - 2))))
    best = None
    for s in starts:
        gx = np.concatenate([[lo], np.atleast_1d(s), [hi]])
        if np.any(np.diff(gx) <= 0):
            continue
        gx = _descend(mu, gx, tol, max_sweeps)
        key = (round(_quadratic_objective(mu, gx), 13), tuple(np.round(gx, 10)))
        if best is None or key < best[0]:
            best = (key, gx)
    grid = Quantizer(best[1])
    push, _, d2 = dual_quantize_1d(mu, grid, 2.0)
    return grid, push, d2


def optimal_dual_1d(mu, n: int, p: float = 2.0, tol: float = 1e-10, support=None, max_sweeps: int = 10_000):
    """``n``-point dual grid minimizing ``d_p^p`` by coordinate search (endpoints pinned).

    No optimality guarantee beyond coordinate-wise minimality.  For
    ``p == 2`` prefer :func:`optimal_dual_1d_quadratic`.
    """
    if n < 2:
        raise ValueError("a dual grid needs n >= 2")
    lo, hi = _support(mu, support)
    if isinstance(mu, Analytic1DMeasure):
        gx = np.concatenate([[lo], np.atleast_1d(mu.quantile(np.arange(1, n - 1) / (n - 1))), [hi]])
    else:
        gx = np.linspace(lo, hi, n)

    def obj(v):
        return dual_distortion_1d(mu, Quantizer(v), p)

    cur = obj(gx)
    for _ in range(max_sweeps):
        prev = cur
        for k in range(1, n - 1):
            a, b = gx[k - 1], gx[k + 1]
            eps = 1e-9 * (b - a)

            def f(t, k=k):
                v = gx.copy()
                v[k] = t
                return obj(v)

            r = minimize_scalar(f, bounds=(a + eps, b - eps), method="bounded", options={"xatol": 1e-12})
            if r.fun < cur:
                gx[k], cur = r.x, r.fun
        if prev - cur <= tol:
            break
    else:
        raise ConvergenceError("dual grid coordinate search did not converge", last=Quantizer(gx))
    grid = Quantizer(gx)
    push, _, dp = dual_quantize_1d(mu, grid, p)
    return grid, push, dp


# --- any dimension, given grid -----------------------------------------------


def dual_distortion_lp(mu: DiscreteMeasure, grid: Quantizer, p: float = 2.0):
    """``d_p(mu, grid)^p`` in any dimension, one small LP per atom.

    Each atom ``x`` picks probabilities ``q`` on the grid with mean ``x``
    minimizing ``sum q_g |g - x|^p``.  Raises ``ValueError`` when an atom
    lies outside the hull of the grid.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    g = grid.points
    if g.shape[1] != mu.dim:
        raise ValueError("grid and measure live in different dimensions")
    A = np.vstack([np.ones(len(g)), g.T])
    total = 0.0
    rows = []
    for x, wx in zip(mu.points, mu.weights):
        cost = np.linalg.norm(g - x, axis=1) ** p
        sol = solve(LinearProgram(cost, A, np.concatenate([[1.0], x])))
        if not sol.optimal:
            raise ValueError(f"atom {x.tolist()} lies outside the hull of the grid")
        q = np.clip(sol.x, 0.0, None)
        q[q < 1e-15] = 0.0
        q /= q.sum()
        cols = np.flatnonzero(q)
        rows.append((cols, q[cols]))
        total += wx * float(q @ cost)
    return total, SplittingKernel(grid, mu.points, rows)
