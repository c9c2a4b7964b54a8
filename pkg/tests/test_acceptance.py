"""Acceptance criteria, one test each.

Every test prints and records a single PASS/FAIL line (collected in the
pytest terminal summary).  Run standalone with ``python3 tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

sys.path.insert(0, str(Path(__file__).parent))

import martquant as mq  # noqa: E402
import oracles  # noqa: E402
from conftest import ACCEPTANCE  # noqa: E402
from martquant.primal import sqrt_density_coefficients  # noqa: E402
from martquant.transport import transport_lp  # noqa: E402


def report(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'}  criterion {k:2d}: {detail}")
    assert ok, detail


def _d1(x, w=None):
    return mq.DiscreteMeasure(np.asarray(x, float)[:, None], w)


# --- closed forms ---------------------------------------------------------------------


def test_01_uniform_primal_closed_form():
    U = mq.uniform01()
    worst = 0.0
    for N in range(2, 51):
        grid = mq.optimal_primal_1d(U, N).quantizer
        for p in (1, 2, 3):
            e = mq.distortion(U, grid, p) ** (1 / p)
            worst = max(worst, abs(e - 1 / (2 * (p + 1) ** (1 / p) * N)))
    report(1, worst <= 1e-9, f"uniform e_(p,N), p in 1..3, N in 2..50: max abs error {worst:.2e} (tol 1e-9)")


def test_02_uniform_dual_closed_form():
    U = mq.uniform01()
    err_g = err_w = err_d = 0.0
    for N in range(3, 31):
        grid, push, _ = mq.optimal_dual_1d_quadratic(U, N)
        err_g = max(err_g, np.max(np.abs(grid.x - np.arange(N) / (N - 1))))
        w = np.full(N, 1 / (N - 1))
        w[[0, -1]] = 1 / (2 * (N - 1))
        err_w = max(err_w, np.max(np.abs(push.weights - w)))
        for p in (1, 2, 3):
            _, _, dp = mq.dual_quantize_1d(U, grid, p)
            err_d = max(err_d, abs(dp ** (1 / p) - (2 / ((p + 1) * (p + 2))) ** (1 / p) / (N - 1)))
    worst = max(err_g, err_w, err_d)
    report(2, worst <= 1e-6,
           f"uniform dual N in 3..30: grid {err_g:.1e}, weights {err_w:.1e}, d_(p,N) {err_d:.1e} (tol 1e-6)")


def test_03_inverse_sqrt_grid():
    c2 = sqrt_density_coefficients(2)[2]
    err_c = abs(c2 - (np.sqrt(17) - 1) / 2)
    m = mq.invsqrt()
    res = mid = match = 0.0
    for N in range(1, 21):
        g = mq.sqrt_density_grid(N)
        res = max(res, mq.stationarity_residual(m, g))
        c = sqrt_density_coefficients(N)
        bounds = c[1:N] ** 2 / c[N] ** 2
        if N > 1:
            mid = max(mid, np.max(np.abs(bounds - 0.5 * (g.x[1:] + g.x[:-1]))))
        match = max(match, np.max(np.abs(mq.optimal_primal_1d(m, N).quantizer.x - g.x)))
    ok = err_c <= 1e-12 and res <= 1e-10 and mid <= 1e-10 and match <= 1e-8
    report(3, ok, f"c_2 error {err_c:.1e}; N<=20 stationarity {res:.1e}, midpoint {mid:.1e}, "
                  f"vs optimal_primal_1d {match:.1e}")


def _nu_u(u):
    r = np.sqrt(u)
    return _d1([0.0, r, 1.0], [u / 3, (1 + r) / 3, (2 - r - u) / 3])


def test_04_density_2x_example():
    mu = mq.tri2x()
    grid, push, d2 = mq.optimal_dual_1d_quadratic(mu, 3)
    e_grid = np.max(np.abs(grid.x - [0, 1 / np.sqrt(3), 1]))
    e_d2 = abs(d2 - (1 / 6 - 2 / 3**2.5))
    w2 = mq.w_p(mq.discretize(mu, 2000), _nu_u(1 / 3), 2)[0]
    r = minimize_scalar(lambda u: mq.w_p_analytic_1d(mu, _nu_u(u), 2), bounds=(0.05, 0.95), method="bounded",
                        options={"xatol": 1e-9})
    ok = e_grid <= 1e-6 and e_d2 <= 1e-8 and abs(w2 - 0.0199758) <= 2e-4 and abs(r.x - 0.326) <= 1e-3
    report(4, ok, f"grid error {e_grid:.1e}, d_(2,3)^2 error {e_d2:.1e}, W_2^2 {w2:.7f} (2000 atoms), "
                  f"argmin u {r.x:.7f}")


# --- transport identities ---------------------------------------------------------------


def test_05_moment_identity():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        x, a, y, b = oracles.random_martingale_pair(rng, int(rng.integers(1, 13)), int(rng.integers(2, 13)))
        mu, nu = _d1(x, a), _d1(y, b)
        val, _ = mq.m_p(mu, nu, 2)
        worst = max(worst, abs(val - (nu.second_moment() - mu.second_moment())))
    report(5, worst <= 1e-8, f"100 random pairs: max |M_2^2 - (m2(nu) - m2(mu))| = {worst:.1e} (tol 1e-8)")


def test_06_stationarity_and_order():
    rng = np.random.default_rng(6)
    res = 0.0
    bad = 0
    for t in range(40):
        d = 1 if t < 30 else 2
        n = int(rng.integers(5, 40))
        mu = mq.DiscreteMeasure(rng.uniform(0, 1, (n, d)), rng.dirichlet(np.ones(n)))
        out = mq.lloyd(mu, int(rng.integers(2, 6)), seed=t)
        res = max(res, mq.stationarity_residual(mu, out.quantizer))
        if d == 1:
            bad += not mq.convex_order_leq_1d(out.pushforward, mu)
        else:
            bad += not mq.convex_order_feasible(out.pushforward, mu)
    for t in range(30):
        n = int(rng.integers(3, 30))
        mu = _d1(rng.uniform(0, 1, n), rng.dirichlet(np.ones(n)))
        if t % 2:
            _, push, _ = mq.optimal_dual_1d_quadratic(mu, int(rng.integers(2, 8)))
        else:
            inner = np.sort(rng.uniform(mu.x[0], mu.x[-1], int(rng.integers(0, 6))))
            grid = mq.Quantizer(np.unique(np.concatenate([[mu.x[0] - 0.1], inner, [mu.x[-1] + 0.05]])))
            push, _, _ = mq.dual_quantize_1d(mu, grid)
        bad += not mq.convex_order_leq_1d(mu, push)
    report(6, res <= 1e-9 and bad == 0,
           f"40 Lloyd runs: max stationarity residual {res:.1e}; convex-order violations {bad} (of 70 checks)")


# --- quantized couplings ------------------------------------------------------------------


def _instances_1d(count=50, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    for t in range(count):
        x, a, y, b = oracles.random_martingale_pair(rng, int(rng.integers(4, 12)), int(rng.integers(4, 12)))
        mu, nu = _d1(x, a), _d1(y, b)
        C = rng.uniform(-1, 1, (mu.size, nu.size)) if t % 2 else mq.CostSpec("abs_power", 1.0)
        _, pi = mq.mot_value(mu, nu, C)
        prim = mq.lloyd(mu, int(rng.integers(1, min(5, mu.size) + 1)))
        K = int(rng.integers(2, nu.size + 1))
        grid_nu, nu_check, _ = mq.optimal_dual_1d_quadratic(nu, K)
        out.append((mu, nu, pi, prim, grid_nu, nu_check))
    return out


def _instances_2d(count=10, seed=8):
    rng = np.random.default_rng(seed)
    corners = mq.Quantizer([[0, 0], [0, 1], [1, 0], [1, 1]])
    out = []
    for _ in range(count):
        n = int(rng.integers(4, 9))
        x = rng.uniform(0.15, 0.85, (n, 2))
        a = rng.dirichlet(np.ones(n))
        src, dst, w = [], [], []
        for i in range(n):
            for s in range(2):
                u = rng.normal(size=2)
                u /= np.linalg.norm(u)
                r = rng.uniform(0.05, 0.15)
                for sign in (1.0, -1.0):
                    src.append(i)
                    dst.append(x[i] + sign * r * u)
                    w.append(a[i] / 4)
        pi = mq.Coupling(x, np.array(dst), src, np.arange(len(dst)), w)
        mu, nu = pi.first_marginal(), pi.second_marginal()
        pi = mq.Coupling(mu.points, nu.points, *_reindex(pi, mu, nu))
        prim = mq.lloyd(mu, int(rng.integers(2, 4)), seed=1)
        out.append((mu, nu, pi, prim, corners))
    return out


def _reindex(pi, mu, nu):
    def lookup(pts, m):
        d = np.linalg.norm(pts[:, None, :] - m.points[None, :, :], axis=2)
        return np.argmin(d, axis=1)
    return lookup(pi.src_points, mu)[pi.i], lookup(pi.dst_points, nu)[pi.j], pi.w


def _nu_check_2d(nu, grid, p=2.0):
    _, kernel = mq.dual_distortion_lp(nu, grid, p)
    return kernel.as_coupling(nu.weights).second_marginal()


def test_07_pi_bar_validity():
    marg = mart = 0.0
    for mu, nu, pi, prim, grid_nu, nu_check in _instances_1d():
        b = mq.build_pi_bar(pi, prim.quantizer, grid_nu)
        marg = max(marg, b.pi_bar.marginal_residual(prim.pushforward, nu_check))
        mart = max(mart, b.pi_bar.martingale_residuals().max())
    for mu, nu, pi, prim, corners in _instances_2d():
        b = mq.build_pi_bar(pi, prim.quantizer, corners)
        marg = max(marg, b.pi_bar.marginal_residual(prim.pushforward, _nu_check_2d(nu, corners)))
        mart = max(mart, b.pi_bar.martingale_residuals().max())
    report(7, marg <= 1e-10 and mart <= 1e-9,
           f"50 1D + 10 2D instances: marginal residual {marg:.1e} (tol 1e-10), martingale {mart:.1e} (tol 1e-9)")


def test_08_distance_bounds():
    slack = np.inf
    count = 0
    cases = [(pi, prim, grid_nu, nu) for mu, nu, pi, prim, grid_nu, _ in _instances_1d()]
    cases += [(pi, prim, corners, nu) for mu, nu, pi, prim, corners in _instances_2d()]
    for pi, prim, grid_nu, nu in cases:
        for p in (1, 2):
            b = mq.build_pi_bar(pi, prim.quantizer, grid_nu, p=p)
            lhs = mq.coupling_distance_w_p(b.pi_bar, pi, p) ** p
            rhs = b.e2 ** (p / 2) + b.dp
            slack = min(slack, rhs + 1e-8 - lhs)
            count += 1
    report(8, slack >= 0, f"{count} checks of W_p^p(pi_bar, pi) <= e_2^p + d_p^p, p in (1, 2): "
                          f"min slack {slack:.2e} (1e-8 allowance included)")


def _phi1(x):
    return np.maximum(0.4 - np.asarray(x), 0.0) ** 2


def _phi2(x):
    x = np.asarray(x)
    return np.where(x < 0.4, 0.0, np.where(x <= 0.6, (x - 0.4) ** 2, 0.04 + 0.4 * (x - 0.6)))


def test_09_mu6_counterexample():
    m6, m6c = mq.mu6(), mq.mu6check()
    f1 = mq.convex_order_feasible(m6, m6c)
    f2 = mq.convex_order_feasible(m6c, m6)
    d1 = float(m6.integrate(_phi1) - m6c.integrate(_phi1))
    d2 = float(m6.integrate(_phi2) - m6c.integrate(_phi2))
    ok = not f1 and not f2 and d1 * d2 < 0
    report(9, ok, f"feasible(mu6, mu6check)={f1}, feasible(mu6check, mu6)={f2}; "
                  f"test-function differences {d1:+.4e}, {d2:+.4e}")


def _slope(ns, vals):
    return float(np.polyfit(np.log(ns), np.log(vals), 1)[0])


def test_10_rates():
    U = mq.uniform01()
    ns = np.arange(2, 65)
    e = [np.sqrt(mq.optimal_primal_1d(U, int(N)).distortion_p) for N in ns]
    d = [np.sqrt(mq.optimal_dual_1d_quadratic(U, int(N))[2]) for N in ns]
    se, sd = _slope(ns, e), _slope(ns, d)
    ok = -1.05 <= se <= -0.95 and -1.05 <= sd <= -0.95
    report(10, ok, f"log-log slopes over N in 2..64: e_(2,N) {se:.4f}, d_(2,N) {sd:.4f} (window [-1.05, -0.95])")


def convergence_fixture(atoms=256):
    mu = mq.discretize(mq.power(0.5, 0.3, 0.9), atoms)
    nu = mq.discretize(mq.uniform01(), atoms)
    return mu, nu


def test_11_convergence():
    t0 = time.time()
    mu, nu = convergence_fixture()
    assert mq.convex_order_leq_1d(mu, nu)
    cost = mq.CostSpec("abs_power", 1.0)
    ref = mq.mot_value(mu, nu, cost)[0]
    errs = []
    for N in (4, 8, 16, 32, 64):
        mu_hat = mq.optimal_primal_1d(mu, N).pushforward
        _, nu_check, _ = mq.optimal_dual_1d_quadratic(nu, N)
        errs.append(abs(mq.mot_value(mu_hat, nu_check, cost)[0] - ref))
    mono = all(b <= a for a, b in zip(errs[1:], errs[2:]))
    dt = time.time() - t0
    ok = errs[-1] <= 5e-3 and mono and dt <= 300
    report(11, ok, "errors at N=K=4..64: " + ", ".join(f"{v:.2e}" for v in errs)
           + f"; nonincreasing from 8: {mono}; {dt:.0f}s")


def test_12_lp_oracle(oracle_data):
    worst = 0.0
    for inst in oracle_data["lp_instances"]:
        mp = (np.asarray(inst["x"]), np.asarray(inst["y"])) if inst["kind"] == "mot" else None
        sol, _ = transport_lp(inst["a"], inst["b"], np.asarray(inst["C"]), mp)
        worst = max(worst, abs(sol.objective - inst["value"]))
    n = len(oracle_data["lp_instances"])
    report(12, worst <= 1e-9, f"{n} transport/MOT LPs vs vertex enumeration: max error {worst:.1e} (tol 1e-9)")


if __name__ == "__main__":
    data = oracles.load()
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            try:
                fn(data) if "oracle_data" in fn.__code__.co_varnames[:fn.__code__.co_argcount] else fn()
            except AssertionError:
                pass
