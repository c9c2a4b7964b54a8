"""Voronoi (primal) quantization.

Nearest-neighbour projection on a grid, L^p distortion, the Lloyd fixed
point for quadratic grids (any dimension for discrete laws, exact cell
integrals for the closed-form 1D families) and the explicit optimal grid
of the ``1/(2 sqrt x)`` density.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError
from .measure import Analytic1DMeasure, DiscreteMeasure
from .transport import Coupling

__all__ = [
    "Quantizer",
    "QuantizationResult",
    "project",
    "assign",
    "distortion",
    "stationarity_residual",
    "lloyd",
    "optimal_primal_1d",
    "sqrt_density_coefficients",
    "sqrt_density_grid",
]


class Quantizer:
    """Finite grid in R^d.  One-dimensional grids are kept strictly increasing."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim <= 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise ValueError("empty grid")
        if pts.shape[1] == 1:
            pts = np.sort(pts, axis=0)
            if np.any(np.diff(pts[:, 0]) <= 0):
                raise ValueError("grid points must be pairwise distinct")
        elif len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("grid points must be pairwise distinct")
        pts.setflags(write=False)
        self.points = pts

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def x(self):
        if self.dim != 1:
            raise ValueError("flat view only exists in dimension 1")
        return self.points[:, 0]

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"Quantizer({self.points.squeeze().tolist()})"


@dataclass(frozen=True, eq=False)
class QuantizationResult:
    quantizer: Quantizer
    pushforward: DiscreteMeasure
    distortion_p: float
    coupling: Coupling | None = None
    iterations: int = 0
    residual: float = 0.0


def _grid_points(grid):
    return grid.points if isinstance(grid, Quantizer) else np.asarray(grid, dtype=float).reshape(len(grid), -1)


def assign(grid, points):
    """Index of the nearest grid point for each row of ``points``; ties go to the lowest index."""
    g = _grid_points(grid)
    pts = np.asarray(points, dtype=float).reshape(-1, g.shape[1])
    out = np.empty(len(pts), dtype=int)
    chunk = max(1, 2_000_000 // max(1, len(g)))
    for s in range(0, len(pts), chunk):
        d2 = np.sum((pts[s:s + chunk, None, :] - g[None, :, :]) ** 2, axis=2)
        out[s:s + chunk] = np.argmin(d2, axis=1)
    return out


def project(grid, x) -> int:
    return int(assign(grid, np.atleast_1d(np.asarray(x, dtype=float)))[0])


def _cells_1d(grid_x, support):
    lo, hi = support
    mids = 0.5 * (grid_x[1:] + grid_x[:-1])
    left = np.clip(np.concatenate([[lo], mids]), lo, hi)
    right = np.clip(np.concatenate([mids, [hi]]), lo, hi)
    return left, right


def distortion(mu, grid, p: float = 2.0) -> float:
    """``e_p(grid, mu)^p = int |x - Proj(x)|^p mu(dx)``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if isinstance(mu, Analytic1DMeasure):
        g = _grid_points(grid)
        if g.shape[1] != 1:
            raise ValueError("closed-form laws are one-dimensional")
        gx = g[:, 0]
        left, right = _cells_1d(gx, mu.support)
        return float(sum(mu.abs_shifted_moment(p, l, r, c) for l, r, c in zip(left, right, gx)))
    idx = assign(grid, mu.points)
    dist = np.linalg.norm(mu.points - _grid_points(grid)[idx], axis=1)
    return float(mu.weights @ dist**p)


def _cell_stats(mu: DiscreteMeasure, idx, n):
    mass = np.bincount(idx, weights=mu.weights, minlength=n)
    sums = np.zeros((n, mu.dim))
    np.add.at(sums, idx, mu.weights[:, None] * mu.points)
    return mass, sums


def stationarity_residual(mu, grid) -> float:
    """Max distance between each grid point and the conditional mean of its Voronoi cell."""
    g = _grid_points(grid)
    if isinstance(mu, Analytic1DMeasure):
        left, right = _cells_1d(g[:, 0], mu.support)
        m0 = mu.shifted_moment(0, left, right, 0.0)
        m1 = mu.shifted_moment(1, left, right, g[:, 0])
        ok = m0 > 0
        return float(np.max(np.abs(m1[ok] / m0[ok]), initial=0.0))
    idx = assign(g, mu.points)
    mass, sums = _cell_stats(mu, idx, len(g))
    ok = mass > 0
    return float(np.max(np.linalg.norm(sums[ok] / mass[ok, None] - g[ok], axis=1), initial=0.0))


def _kmeanspp(mu: DiscreteMeasure, n, rng):
    centers = [mu.points[rng.choice(mu.size, p=mu.weights)]]
    d2 = np.sum((mu.points - centers[0]) ** 2, axis=1)
    for _ in range(1, n):
        score = mu.weights * d2
        if score.sum() <= 0:
            break
        c = mu.points[rng.choice(mu.size, p=score / score.sum())]
        centers.append(c)
        d2 = np.minimum(d2, np.sum((mu.points - c) ** 2, axis=1))
    return np.array(centers)


def _fill(grid, mu, n):
    """Add atoms with the largest cell distortion until the grid has ``n`` points."""
    grid = np.array(grid, dtype=float)
    while len(grid) < n:
        idx = assign(grid, mu.points)
        score = mu.weights * np.sum((mu.points - grid[idx]) ** 2, axis=1)
        grid = np.vstack([grid, mu.points[np.argmax(score)]])
    return grid


def _quantile_cell_means(mu: DiscreteMeasure, n):
    """Mean of ``mu`` over each quantile slab ``u in [(k-1)/n, k/n]``."""
    cw = np.concatenate([[0.0], np.cumsum(mu.weights)])
    cw /= cw[-1]
    u = np.linspace(0.0, 1.0, n + 1)
    # mass of atom i inside slab k is the overlap of [cw_i, cw_{i+1}] with [u_k, u_{k+1}]
    lo = np.maximum(cw[None, :-1], u[:-1, None])
    hi = np.minimum(cw[None, 1:], u[1:, None])
    overlap = np.clip(hi - lo, 0.0, None)
    return (overlap @ mu.x) / overlap.sum(axis=1)


def _initial_grid(mu: DiscreteMeasure, n, seed):
    if mu.dim == 1:
        q = _quantile_cell_means(mu, n)
        return _fill(np.unique(q).reshape(-1, 1), mu, n)
    return _fill(_kmeanspp(mu, n, np.random.default_rng(seed)), mu, n)


def lloyd(mu: DiscreteMeasure, n: int, init=None, tol: float = 1e-12, max_iter: int = 100_000, seed: int = 0):
    """Quadratic Voronoi quantization of a discrete law by Lloyd's fixed point.

    Each step moves every grid point to the mean of its cell.  Initial grid:
    the means of the ``n`` equal-mass quantile slabs in 1D, k-means++ seeding (``seed``) otherwise, or an
    explicit ``init``.  An emptied cell is re-seeded at the atom with the
    largest distortion.  Raises :class:`ConvergenceError` (carrying the last
    grid) if the displacement never drops below ``tol``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mu.size <= n:
        grid = mu.points.copy()
        i = np.arange(mu.size)
        pi = Coupling(grid, mu.points, i, i, mu.weights)
        return QuantizationResult(Quantizer(grid), mu, 0.0, pi, 0, 0.0)
    if init is None or isinstance(init, (int, np.integer)):
        grid = _initial_grid(mu, n, 0 if init is None else int(init))
    else:
        grid = _grid_points(init).astype(float).copy()
        if len(grid) != n:
            raise ValueError("initial grid has the wrong size")
    for it in range(1, max_iter + 1):
        idx = assign(grid, mu.points)
        mass, sums = _cell_stats(mu, idx, n)
        empty = mass <= 0
        new = grid.copy()
        new[~empty] = sums[~empty] / mass[~empty, None]
        if np.any(empty):
            for k in np.flatnonzero(empty):
                idx = assign(new, mu.points)
                score = mu.weights * np.sum((mu.points - new[idx]) ** 2, axis=1)
                new[k] = mu.points[np.argmax(score)]
            grid = new
            continue
        disp = float(np.max(np.linalg.norm(new - grid, axis=1)))
        grid = new
        if disp <= tol:
            break
    else:
        raise ConvergenceError(f"Lloyd iteration did not converge in {max_iter} steps", last=Quantizer(grid))
    return _result_discrete(mu, grid, it)


def _result_discrete(mu, grid, iterations):
    if grid.shape[1] == 1:
        grid = np.sort(grid, axis=0)
    idx = assign(grid, mu.points)
    mass, _ = _cell_stats(mu, idx, len(grid))
    keep = mass > 0
    grid = grid[keep]
    idx = np.cumsum(keep)[idx] - 1
    push = DiscreteMeasure(grid, mass[keep])
    dist = float(mu.weights @ np.sum((mu.points - grid[idx]) ** 2, axis=1))
    # pushforward atoms are sorted inside DiscreteMeasure; index the coupling against the grid as given
    pi = Coupling(grid, mu.points, idx, np.arange(mu.size), mu.weights)
    q = Quantizer(grid)
    return QuantizationResult(q, push, dist, pi, iterations, stationarity_residual(mu, q))


def _lloyd_map_residual(mu, grid):
    left, right = _cells_1d(grid, mu.support)
    m0 = mu.shifted_moment(0, left, right, 0.0)
    m1 = mu.shifted_moment(1, left, right, grid)  # int (t - x_k) over cell k
    return left, right, m0, m1


def _newton_polish(mu, grid, tol, max_steps=50):
    """Newton on ``G_k = int_{cell k} (x_k - t) mu(dt) = 0``; tridiagonal Jacobian."""
    from scipy.linalg import solve_banded

    n = len(grid)
    for _ in range(max_steps):
        left, right, m0, m1 = _lloyd_map_residual(mu, grid)
        G = -m1
        if np.max(np.abs(m1 / m0)) <= tol:
            return grid
        fr = np.append(mu.pdf(right[:-1]), 0.0)
        fl = np.insert(mu.pdf(left[1:]), 0, 0.0)
        up = -(right - grid) * fr / 2
        lo = -(grid - left) * fl / 2
        ab = np.zeros((3, n))
        ab[0, 1:] = up[:-1]
        ab[1] = m0 + up + lo
        ab[2, :-1] = lo[1:]
        try:
            step = solve_banded((1, 1), ab, G)
        except (np.linalg.LinAlgError, ValueError):
            return None
        new = grid - step
        lo_s, hi_s = mu.support
        if not (np.all(np.diff(new) > 0) and new[0] > lo_s and new[-1] < hi_s):
            return None
        grid = new
    return None


def _kmeans_dp_1d(x, w, n):
    """Exact quadratic ``n``-grid of a sorted 1D discrete law (cells are contiguous runs of atoms)."""
    m = len(x)
    P0 = np.concatenate([[0.0], np.cumsum(w)])
    P1 = np.concatenate([[0.0], np.cumsum(w * x)])
    P2 = np.concatenate([[0.0], np.cumsum(w * x * x)])
    # run of atoms i..j (inclusive) costs S2 - S1^2 / S0
    S0 = P0[None, 1:] - P0[:-1, None]
    S1 = P1[None, 1:] - P1[:-1, None]
    S2 = P2[None, 1:] - P2[:-1, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.where(S0 > 0, S2 - S1**2 / S0, 0.0)
    C = np.maximum(C, 0.0)
    C[np.tril_indices(m, -1)] = np.inf
    f = C[0].copy()  # one cell covering atoms 0..j
    parents = []
    for _ in range(1, n):
        # new cell i..j after best (k-1)-cell cover of 0..i-1
        tot = np.full((m, m), np.inf)
        tot[1:] = f[:-1, None] + C[1:]
        arg = np.argmin(tot, axis=0)
        f = tot[arg, np.arange(m)]
        parents.append(arg)
    starts = []
    j = m - 1
    for arg in reversed(parents):
        i = int(arg[j])
        starts.append(i)
        j = i - 1
    bounds = [0] + starts[::-1] + [m]
    return np.array([P1[e] - P1[s] for s, e in zip(bounds[:-1], bounds[1:])]) / \
        np.array([P0[e] - P0[s] for s, e in zip(bounds[:-1], bounds[1:])])


def optimal_primal_1d(mu, n: int, tol: float = 1e-12, max_iter: int = 1_000_000):
    """Quadratic optimal ``n``-point grid of a 1D law.

    Closed-form law: solves the stationarity system (each point is its
    cell mean, each boundary the midpoint of its neighbours) by Lloyd's
    fixed point on exact cell moments, started from the quantile midpoints
    and finished by Newton steps once the iterate is close.

    Discrete law: exact global optimum by dynamic programming over
    contiguous runs of atoms (``O(n m^2)``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(mu, DiscreteMeasure):
        if mu.dim != 1:
            raise ValueError("exact grid search is one-dimensional; use lloyd in d >= 2")
        if mu.size <= n:
            return lloyd(mu, n)
        grid = _kmeans_dp_1d(mu.x, mu.weights, n).reshape(-1, 1)
        return _result_discrete(mu, grid, 0)
    grid = np.atleast_1d(mu.quantile((2 * np.arange(1, n + 1) - 1) / (2 * n))).astype(float)
    polish_at = 1e-6
    for it in range(1, max_iter + 1):
        _, _, m0, m1 = _lloyd_map_residual(mu, grid)
        step = np.atleast_1d(m1 / m0)
        grid = grid + step
        disp = float(np.max(np.abs(step)))
        if disp <= tol:
            break
        if disp <= polish_at:
            polished = _newton_polish(mu, grid, tol)
            if polished is not None:
                grid = polished
                break
            polish_at /= 100
    else:
        raise ConvergenceError(f"Lloyd iteration did not converge in {max_iter} steps", last=Quantizer(grid))
    q = Quantizer(grid)
    _, _, m0, _ = _lloyd_map_residual(mu, grid)
    push = DiscreteMeasure(grid, np.atleast_1d(m0))
    return QuantizationResult(q, push, distortion(mu, q, 2.0), None, it, stationarity_residual(mu, q))


def sqrt_density_coefficients(n: int) -> np.ndarray:
    """``c_0 = 0, c_1 = 1, c_{k+1} = (sqrt(17 c_k^2 - 4 c_k c_{k-1} - 4 c_{k-1}^2) - c_k) / 2``."""
    c = np.zeros(n + 1)
    if n >= 1:
        c[1] = 1.0
    for k in range(1, n):
        c[k + 1] = 0.5 * (np.sqrt(17 * c[k] ** 2 - 4 * c[k] * c[k - 1] - 4 * c[k - 1] ** 2) - c[k])
    return c


def sqrt_density_grid(n: int, a: float = 0.0, b: float = 1.0) -> Quantizer:
    """Closed-form quadratic optimal grid of the density ``1 / (2 sqrt((b-a)(x-a)))`` on ``(a, b)``."""
    if n < 1 or not a < b:
        raise ValueError("need n >= 1 and a < b")
    c = sqrt_density_coefficients(n)
    k = np.arange(1, n + 1)
    x = a + (b - a) * (c[k] ** 2 + c[k] * c[k - 1] + c[k - 1] ** 2) / (3 * c[n] ** 2)
    return Quantizer(x)
