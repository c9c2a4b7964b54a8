"""Martingale couplings between quantized marginals.

Given a martingale coupling ``pi`` of ``(mu, nu)``, a stationary Voronoi
grid for ``mu`` and a splitting kernel onto a dual grid for ``nu``,

    pi_bar(i, j) = sum_{x, y} pi(x, y) 1{Proj(x) = i} q_y(j)

is a martingale coupling of the two quantized marginals.  Also here: the
adapted (nested) Wasserstein distance between couplings, plain ``W_p``
between couplings viewed as laws on R^{2d}, and weak MOT with a few
kernel costs that stay linear programs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dual import SplittingKernel, dual_distortion_lp, split_1d
from .exceptions import ConvexOrderError
from .lp import LinearProgram, LpError, solve
from .measure import DiscreteMeasure
from .primal import Quantizer, assign, stationarity_residual
from .transport import (
    Coupling,
    CostSpec,
    MartingaleCoupling,
    _check_means,
    convex_order_feasible,
    mot_value,
    pairwise_cost,
    transport_lp,
    w_p,
)

__all__ = [
    "QuantizedCouplingBundle",
    "build_pi_bar",
    "aw_p",
    "coupling_distance_w_p",
    "wmot_value_via_kernel_cost",
    "STATIONARITY_TOL",
]

STATIONARITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class QuantizedCouplingBundle:
    pi: Coupling
    grid_mu: Quantizer
    kernel: SplittingKernel
    pi_check: Coupling        # mu -> dual pushforward of nu
    pi_bar: Coupling          # Voronoi pushforward of mu -> dual pushforward of nu
    e2: float                 # e_2(grid_mu, mu)^2
    dp: float                 # d_p(grid_nu, nu)^p
    p: float
    stationarity: float

    @property
    def mu_hat(self) -> DiscreteMeasure:
        return self.pi_bar.first_marginal()

    @property
    def nu_check(self) -> DiscreteMeasure:
        return self.pi_bar.second_marginal()


def _kernel_rows_for(points, q, p):
    """Per-point split rows onto ``q``'s grid, reusing ``q``'s rows when its sources match."""
    grid = q.grid if isinstance(q, SplittingKernel) else q
    if isinstance(q, SplittingKernel) and len(q.sources) == len(points) and np.allclose(q.sources, points, atol=1e-12, rtol=0):
        return grid, q.rows
    if isinstance(q, SplittingKernel) and len(q.sources):
        lookup = {tuple(s): r for s, r in zip(q.sources, q.rows)}
        if all(tuple(x) in lookup for x in points):
            return grid, [lookup[tuple(x)] for x in points]
    if grid.dim == 1:
        rows = []
        for x in points[:, 0]:
            cols, ws = split_1d(grid, x)
            keep = [t for t in range(len(ws)) if ws[t] > 0]
            rows.append((np.array([cols[t] for t in keep]), np.array([ws[t] for t in keep])))
        return grid, rows
    _, k = dual_distortion_lp(DiscreteMeasure(points), grid, p)
    lookup = {tuple(s): r for s, r in zip(k.sources, k.rows)}
    return grid, [lookup[tuple(x)] for x in points]


def build_pi_bar(pi: Coupling, grid_mu: Quantizer, q, p: float = 2.0, strict: bool = True,
                 tol: float = STATIONARITY_TOL) -> QuantizedCouplingBundle:
    """Quantize both sides of the martingale coupling ``pi``.

    ``q`` is a :class:`SplittingKernel` (rows for the target points of
    ``pi``) or just the dual grid, in which case the split is computed.
    ``grid_mu`` must be stationary for the first marginal: otherwise the
    result is not a martingale, so ``strict`` raises and non-strict warns.
    """
    src_w = pi.src_weights
    active = src_w > 0
    mu = DiscreteMeasure(pi.src_points[active], src_w[active])
    res = stationarity_residual(mu, grid_mu)
    if res > tol:
        msg = f"grid is not stationary for the first marginal (residual {res:.2e}); pi_bar will not be a martingale"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    grid_nu, rows = _kernel_rows_for(pi.dst_points, q, p)
    gpts = grid_nu.points

    # expand every (x, y) entry of pi over the split of y
    counts = np.array([len(rows[j][0]) for j in pi.j])
    ii = np.repeat(pi.i, counts)
    jj = np.concatenate([rows[j][0] for j in pi.j])
    ww = np.concatenate([pi.w[k] * rows[j][1] for k, j in enumerate(pi.j)])
    pi_check = Coupling(pi.src_points, gpts, ii, jj, ww)
    proj = assign(grid_mu, pi.src_points)
    pi_bar = Coupling(grid_mu.points, gpts, proj[ii], jj, ww)

    e2 = float(src_w @ np.sum((pi.src_points - grid_mu.points[proj]) ** 2, axis=1))
    dst_w = pi.dst_weights
    dp = 0.0
    for j, (cols, w) in enumerate(rows):
        if dst_w[j] > 0:
            dp += dst_w[j] * float(w @ np.linalg.norm(gpts[cols] - pi.dst_points[j], axis=1) ** p)
    kernel = SplittingKernel(grid_nu, pi.dst_points, rows)
    return QuantizedCouplingBundle(pi, grid_mu, kernel, pi_check, pi_bar, e2, float(dp), p, res)


def _row_key(pi: Coupling, i):
    cols, w = pi.kernel(i)
    return cols.tobytes() + w.tobytes()


def aw_p(pi: Coupling, pi_t: Coupling, p: float = 1.0) -> float:
    """Adapted Wasserstein distance ``AW_p(pi, pi_t)`` between finitely supported couplings.

    Outer transport between the first marginals with cost
    ``|x - x'|^p + W_p^p(pi_x, pi_t_x')``; kernel-pair distances are
    memoized on the kernel contents.
    """
    if pi.dim != pi_t.dim:
        raise ValueError("couplings live in different dimensions")
    src = np.flatnonzero(pi.src_weights > 0)
    src_t = np.flatnonzero(pi_t.src_weights > 0)
    kernels = {i: pi.kernel_measure(i) for i in src}
    kernels_t = {k: pi_t.kernel_measure(k) for k in src_t}
    keys = {i: _row_key(pi, i) for i in src}
    keys_t = {k: _row_key(pi_t, k) for k in src_t}
    memo = {}
    C = pairwise_cost(pi.src_points[src], pi_t.src_points[src_t], p)
    for a, i in enumerate(src):
        for b, k in enumerate(src_t):
            key = (keys[i], keys_t[k])
            if key not in memo:
                memo[key] = w_p(kernels[i], kernels_t[k], p)[0]
            C[a, b] += memo[key]
    sol, plan = transport_lp(pi.src_weights[src], pi_t.src_weights[src_t], C)
    if plan is None:
        raise LpError(f"outer transport LP returned {sol.status}", sol.iterations)
    return float(max(sol.objective, 0.0)) ** (1.0 / p)


def coupling_distance_w_p(pi: Coupling, pi_t: Coupling, p: float = 2.0) -> float:
    """``W_p`` between two couplings seen as laws on R^{2d} (Euclidean norm on stacked ``(x, y)``)."""
    if pi.dim != pi_t.dim:
        raise ValueError("couplings live in different dimensions")
    val, _ = w_p(pi.as_measure(), pi_t.as_measure(), p, method="lp")
    return float(max(val, 0.0)) ** (1.0 / p)


WMOT_KINDS = ("variance", "linear", "constant", "wp_reference")


def wmot_value_via_kernel_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, kind: str = "variance", *,
                               cost: CostSpec | None = None, values=None, references=None, p: float = 1.0):
    """Weak MOT value ``inf_pi sum_x mu(x) C(x, pi_x)`` for kernel costs that reduce to an LP.

    kinds:
      ``variance``      ``C(x, eta) = int |y - x|^2 eta(dy)``
      ``linear``        ``C(x, eta) = int c(x, y) eta(dy)`` with ``cost``
      ``constant``      ``C(x, eta) = values[x]`` (one number per atom of ``mu``)
      ``wp_reference``  ``C(x, eta) = W_p^p(eta, references[x])``; a joint LP over
                        couplings of each kernel with its reference measure

    Returns ``(value, coupling)``; the coupling is ``None`` for ``constant``.
    """
    if kind not in WMOT_KINDS:
        raise ValueError(f"unsupported kernel cost {kind!r}; choose from {WMOT_KINDS}")
    if kind == "variance":
        return mot_value(mu, nu, CostSpec("abs_power", 2.0))
    if kind == "linear":
        if cost is None:
            raise ValueError("linear kernel cost needs a CostSpec")
        return mot_value(mu, nu, cost)
    if kind == "constant":
        v = np.asarray(values, dtype=float)
        if v.shape != (mu.size,):
            raise ValueError("constant kernel cost needs one value per atom")
        if not convex_order_feasible(mu, nu):
            raise ConvexOrderError("no martingale coupling exists (Strassen)")
        return float(mu.weights @ v), None
    if references is None or len(references) != mu.size:
        raise ValueError("wp_reference needs one reference measure per atom of mu")
    return _wmot_reference(mu, nu, references, p)


def _wmot_reference(mu, nu, refs, p):
    _check_means(mu, nu)
    n, m = mu.size, nu.size
    blocks = []
    costs = []
    offsets = [0]
    for i, r in enumerate(refs):
        costs.append(pairwise_cost(nu.points, r.points, p).ravel())
        offsets.append(offsets[-1] + m * r.size)
    nvar = offsets[-1]
    # variables gamma^i[j, l], flattened per atom i in row-major (j, l)
    rows, cols, vals, rhs = [], [], [], []
    row = 0
    for j in range(m):  # sum_i sum_l gamma^i[j, l] = nu_j
        for i, r in enumerate(refs):
            idx = offsets[i] + j * r.size + np.arange(r.size)
            rows.extend([row] * r.size)
            cols.extend(idx)
            vals.extend([1.0] * r.size)
        rhs.append(nu.weights[j])
        row += 1
    for i, r in enumerate(refs):
        for l in range(r.size):  # sum_j gamma^i[j, l] = mu_i r_l
            idx = offsets[i] + np.arange(m) * r.size + l
            rows.extend([row] * m)
            cols.extend(idx)
            vals.extend([1.0] * m)
            rhs.append(mu.weights[i] * r.weights[l])
            row += 1
        for k in range(mu.dim):  # sum_{j, l} gamma^i[j, l] (y_jk - x_ik) = 0
            idx = offsets[i] + np.arange(m * r.size)
            rows.extend([row] * len(idx))
            cols.extend(idx)
            vals.extend(np.repeat(nu.points[:, k] - mu.points[i, k], r.size))
            rhs.append(0.0)
            row += 1
    A = sp.csc_matrix((vals, (rows, cols)), shape=(row, nvar))
    sol = solve(LinearProgram(np.concatenate(costs), A, np.array(rhs)))
    if not sol.optimal:
        if sol.status == "infeasible":
            raise ConvexOrderError("no martingale coupling exists (Strassen)")
        raise LpError(f"weak MOT LP returned {sol.status}", sol.iterations)
    x = np.clip(sol.x, 0.0, None)
    plan = np.zeros((n, m))
    for i, r in enumerate(refs):
        plan[i] = x[offsets[i]:offsets[i + 1]].reshape(m, r.size).sum(axis=1)
    plan[plan < 1e-15] = 0.0
    pi = MartingaleCoupling.from_coupling(Coupling.from_dense(mu.points, nu.points, plan), check=False)
    return float(sol.objective), pi
