"""Probability measures: finitely supported ones and closed-form 1D families.

Also hosts the potential function ``x -> int_{-inf}^x F(y) dy`` of a 1D
discrete measure and the convex-order test built on it.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

__all__ = [
    "DiscreteMeasure",
    "Analytic1DMeasure",
    "PotentialFunction",
    "discretize",
    "potential",
    "convex_order_leq_1d",
    "uniform",
    "power",
    "uniform01",
    "tri2x",
    "invsqrt",
    "mu6",
    "mu6check",
]

MASS_TOL = 1e-12
CVX_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on R^d.

    ``points`` has shape ``(n, d)``; a 1D array is read as ``n`` points in R.
    Duplicate points are merged and atoms are sorted (lexicographically in
    d >= 2).  Weights within 1e-9 of unit total mass are renormalized.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (n, d) array")
        n = pts.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float).ravel()
        if w.shape != (n,):
            raise ValueError("one weight per point required")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("points and weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        keep = w > 0
        pts, w = pts[keep], w[keep]
        if w.size == 0:
            raise ValueError("measure has no mass")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total!r}, not 1")
        uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inverse.ravel(), w)
        merged /= merged.sum()
        object.__setattr__(self, "points", _frozen(uniq))
        object.__setattr__(self, "weights", _frozen(merged))

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    def __len__(self):
        return self.size

    @property
    def x(self):
        """Atoms of a 1D measure as a flat array."""
        if self.dim != 1:
            raise ValueError("flat view only exists in dimension 1")
        return self.points[:, 0]

    def mean(self):
        m = self.weights @ self.points
        return float(m[0]) if self.dim == 1 else m

    def second_moment(self):
        return float(self.weights @ np.sum(self.points**2, axis=1))

    def moment(self, p):
        """``int |x|^p`` with the Euclidean norm."""
        return float(self.weights @ np.linalg.norm(self.points, axis=1) ** p)

    def integrate(self, f):
        """``int f dmu`` for a vectorized ``f`` (applied to the flat atoms in 1D)."""
        arg = self.x if self.dim == 1 else self.points
        return float(self.weights @ np.asarray(f(arg), dtype=float))

    def cdf(self, t):
        return float(self.weights[self.x <= t].sum())

    def affine(self, shift, scale):
        """Law of ``shift + scale * X``."""
        return DiscreteMeasure(shift + scale * self.points, self.weights)

    def __repr__(self):
        return f"DiscreteMeasure(n={self.size}, dim={self.dim})"


@dataclass(frozen=True)
class Analytic1DMeasure:
    """Power law ``rho * t^(rho-1)`` on ``t in (0, 1)`` pushed by ``x = offset + scale * t``.

    ``rho = 1`` is the uniform law on ``[offset, offset + scale]``.
    """

    family: str = "uniform"
    rho: float = 1.0
    offset: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in ("uniform", "power"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "uniform":
            object.__setattr__(self, "rho", 1.0)
        if not self.rho > 0:
            raise ValueError("power family requires rho > 0")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def support(self):
        return self.offset, self.offset + self.scale

    def _t(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.offset) / self.scale, 0.0, 1.0)

    def cdf(self, x):
        out = self._t(x) ** self.rho
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        t = (x - self.offset) / self.scale
        inside = (t > 0) & (t < 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(inside, self.rho * np.where(inside, t, 0.5) ** (self.rho - 1) / self.scale, 0.0)
        return float(val) if val.ndim == 0 else val

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("quantile level must lie in (0, 1)")
        out = self.offset + self.scale * u ** (1.0 / self.rho)
        return float(out) if out.ndim == 0 else out

    def _quantile_closed(self, u):
        # quantile on the closed interval [0, 1], for cell boundaries
        return self.offset + self.scale * np.clip(np.asarray(u, dtype=float), 0.0, 1.0) ** (1.0 / self.rho)

    def partial_moment(self, p, lo, hi):
        """``int_lo^hi x^p mu(dx)`` for an integer ``p >= 0``, in closed form."""
        if int(p) != p or p < 0:
            raise ValueError("partial moments are defined for integer p >= 0")
        return self.shifted_moment(int(p), lo, hi, 0.0)

    def shifted_moment(self, k, lo, hi, c):
        """``int_lo^hi (x - c)^k mu(dx)`` for integer ``k >= 0`` (vectorized over lo, hi, c)."""
        lo, hi, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lo, hi, c)))
        if np.any(hi < lo):
            raise ValueError("partial moment needs lo <= hi")
        t_lo, t_hi = self._t(lo), self._t(hi)
        base = self.offset - c
        if self.rho == 1.0:
            # exact in shifted coordinates: no cancellation for small cells
            a = self.offset + self.scale * t_lo - c
            b = self.offset + self.scale * t_hi - c
            out = (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * self.scale)
        else:
            out = np.zeros_like(base)
            for j in range(k + 1):
                e = j + self.rho
                out = out + comb(k, j) * base ** (k - j) * self.scale**j * self.rho * (t_hi**e - t_lo**e) / e
        return float(out) if out.ndim == 0 else out

    def abs_shifted_moment(self, p, lo, hi, c):
        """``int_lo^hi |x - c|^p mu(dx)`` for real ``p >= 0`` (scalar arguments)."""
        if hi <= lo:
            return 0.0
        if self.rho == 1.0:
            a0, b0 = self.support
            lo, hi = max(lo, a0), min(hi, b0)
            if hi <= lo:
                return 0.0

            def anti(t):
                return np.sign(t) * np.abs(t) ** (p + 1) / (p + 1)

            return float((anti(hi - c) - anti(lo - c)) / self.scale)
        if float(p).is_integer():
            k = int(p)
            left = self.shifted_moment(k, lo, min(hi, max(lo, c)), c) if c > lo else 0.0
            right = self.shifted_moment(k, max(lo, min(hi, c)), hi, c) if c < hi else 0.0
            return float((-1) ** k * left + right)
        from scipy.integrate import quad

        a0, b0 = self.support
        lo, hi = max(lo, a0), min(hi, b0)
        if hi <= lo:
            return 0.0
        pts = [c] if lo < c < hi else None
        val, _ = quad(lambda x: abs(x - c) ** p * self.pdf(x), lo, hi, points=pts, limit=200, epsabs=1e-14)
        return float(val)

    def mean(self):
        return self.offset + self.scale * self.rho / (self.rho + 1)

    def second_moment(self):
        return float(self.partial_moment(2, *self.support))

    def affine(self, shift, scale):
        """Law of ``shift + scale * X`` (``scale > 0``)."""
        return Analytic1DMeasure(self.family, self.rho, shift + scale * self.offset, scale * self.scale)


def uniform(a=0.0, b=1.0):
    return Analytic1DMeasure("uniform", 1.0, a, b - a)


def power(rho, a=0.0, b=1.0):
    return Analytic1DMeasure("power", rho, a, b - a)


def uniform01():
    return uniform(0.0, 1.0)


def tri2x():
    """Density ``2x`` on [0, 1]."""
    return power(2.0)


def invsqrt():
    """Density ``1 / (2 sqrt(x))`` on (0, 1)."""
    return power(0.5)


def _from_fractions(points, weights):
    assert sum(weights) == 1
    return DiscreteMeasure([float(p) for p in points], [float(w) for w in weights])


F = Fraction


def mu6():
    """Dual quantization of U[0,1] on {0, 2/5, 7/15, 8/15, 3/5, 1}; it is its own optimal 6-point dual quantization."""
    return _from_fractions(
        [0, F(2, 5), F(7, 15), F(8, 15), F(3, 5), 1],
        [F(1, 5), F(7, 30), F(1, 15), F(1, 15), F(7, 30), F(1, 5)],
    )


def mu6check():
    """Optimal 6-point dual quantization of U[0,1]."""
    return _from_fractions(
        [0, F(1, 5), F(2, 5), F(3, 5), F(4, 5), 1],
        [F(1, 10), F(1, 5), F(1, 5), F(1, 5), F(1, 5), F(1, 10)],
    )


def discretize(m: Analytic1DMeasure, n: int) -> DiscreteMeasure:
    """Conditional means of ``m`` over the quantile cells ``[(k-1)/n, k/n]``, weight ``1/n`` each.

    The result is dominated by ``m`` in the convex order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    edges = m._quantile_closed(np.arange(n + 1) / n)
    atoms = n * m.shifted_moment(1, edges[:-1], edges[1:], 0.0)
    atoms = np.atleast_1d(atoms)
    # conditional means are strictly increasing; guard against round-off ties at the ends
    atoms = np.clip(atoms, edges[:-1], edges[1:])
    return DiscreteMeasure(atoms, np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class PotentialFunction:
    """Convex piecewise-affine ``x -> sum_i w_i (x - x_i)^+``.

    ``slopes[k]`` is the slope on ``[breakpoints[k], breakpoints[k+1])``;
    the slope left of the first breakpoint is 0.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    mean: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.breakpoints, x, side="right") - 1
        kc = np.clip(k, 0, None)
        out = np.where(k < 0, 0.0, self.values[kc] + self.slopes[kc] * (x - self.breakpoints[kc]))
        return float(out) if out.ndim == 0 else out


def potential(m: DiscreteMeasure) -> PotentialFunction:
    if m.dim != 1:
        raise ValueError("potential functions are defined in dimension 1")
    x, w = m.x, m.weights
    slopes = np.minimum(np.cumsum(w), 1.0)
    slopes[-1] = 1.0
    values = np.concatenate([[0.0], np.cumsum(slopes[:-1] * np.diff(x))])
    return PotentialFunction(_frozen(x), _frozen(values), _frozen(slopes), m.mean())


def convex_order_leq_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = CVX_TOL) -> bool:
    """True when ``mu <=_cvx nu`` up to ``tol``.

    Means must agree and the potential of ``nu`` must dominate that of
    ``mu``; checking at the atoms of both suffices since the difference is
    piecewise affine with kinks only there and vanishes at +-infinity.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("1D test only")
    if abs(mu.mean() - nu.mean()) > tol:
        return False
    grid = np.union1d(mu.x, nu.x)
    return bool(np.all(potential(nu)(grid) >= potential(mu)(grid) - tol))
