"""Command line front end.

Exit codes: 0 ok, 1 a reproduce check failed, 2 invalid input,
3 non-convergence, 4 no martingale coupling (convex-order violation).
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import __version__
from .coupling import aw_p, build_pi_bar, coupling_distance_w_p
from .dual import dual_quantize_1d, dual_distortion_lp, optimal_dual_1d, optimal_dual_1d_quadratic
from .exceptions import ConvergenceError, ConvexOrderError
from .io import coupling_to_dict, dump, load_cost, load_measure, quantizer_from_dict
from .lp import LpError
from .measure import (
    Analytic1DMeasure,
    DiscreteMeasure,
    convex_order_leq_1d,
    discretize,
    mu6,
    mu6check,
    tri2x,
    uniform01,
)
from .primal import distortion, lloyd, optimal_primal_1d, sqrt_density_coefficients, sqrt_density_grid
from .transport import convex_order_feasible, mot_value, w_p, w_p_analytic_1d

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

EPILOG = """exit codes:
  0  success
  1  reproduce: at least one check FAILED
  2  invalid input (bad measure, grid, cost or flag)
  3  an iterative search did not converge
  4  no martingale coupling exists: the marginals are not in convex order (Strassen)

measures: builtin names uniform01, tri2x (density 2x), invsqrt (density 1/(2 sqrt x)),
mu6, mu6check (optionally prefixed 'builtin:'), or a JSON file
  {"dim": d, "points": [[...]], "weights": [...]}  or
  {"family": "uniform"|"power", "rho": r, "offset": a, "scale": s}
environment: MARTQUANT_THREADS caps sweep parallelism (default 1)."""


def _threads():
    try:
        return max(1, int(os.environ.get("MARTQUANT_THREADS", "1")))
    except ValueError:
        return 1


def _discrete(m, atoms):
    return discretize(m, atoms) if isinstance(m, Analytic1DMeasure) else m


def _emit(payload, out, summary):
    text = dump(payload, out)
    if out is None:
        print(text)
        print(summary, file=sys.stderr)
    else:
        print(summary)


# --- quantize -----------------------------------------------------------------


def cmd_quantize(args):
    m = load_measure(args.measure)
    if args.n < 1:
        raise ValueError("--n must be >= 1")
    payload = {"mode": args.mode, "n": args.n, "p": args.p}
    if args.mode == "primal":
        if isinstance(m, Analytic1DMeasure):
            res = optimal_primal_1d(m, args.n, tol=args.tol)
        elif m.dim == 1 and not args.lloyd:
            res = optimal_primal_1d(m, args.n)
        else:
            res = lloyd(m, args.n, init=args.seed, tol=args.tol, max_iter=args.max_iter)
        grid, push = res.quantizer, res.pushforward
        dist = res.distortion_p if args.p == 2 else distortion(m, grid, args.p)
        payload["residual"] = res.residual
    else:
        if args.grid is not None:
            grid = quantizer_from_dict(json.loads(open(args.grid).read()))
            if isinstance(m, Analytic1DMeasure) or grid.dim == 1:
                push, _, dist = dual_quantize_1d(m, grid, args.p)
            else:
                dist, kernel = dual_distortion_lp(m, grid, args.p)
                push = kernel.as_coupling(m.weights).second_marginal()
        else:
            if not isinstance(m, Analytic1DMeasure) and m.dim != 1:
                raise ValueError("dual grid search is one-dimensional; pass --grid for d >= 2")
            if args.p == 2:
                grid, push, dist = optimal_dual_1d_quadratic(m, args.n, tol=args.tol, seed=args.seed)
            else:
                grid, push, dist = optimal_dual_1d(m, args.n, args.p)
    payload.update({
        "grid": grid.points.tolist(),
        "weights": [float(push.weights[np.argmin(np.linalg.norm(push.points - g, axis=1))])
                    if np.min(np.linalg.norm(push.points - g, axis=1)) < 1e-12 else 0.0 for g in grid.points],
        "distortion": dist,
        "distortion_root": dist ** (1.0 / args.p),
    })
    pts = ", ".join(f"{v:.6g}" for v in grid.points.ravel()) if grid.dim == 1 else f"{len(grid)} points in R^{grid.dim}"
    summary = f"{args.mode} grid ({len(grid)}): {pts}\ndistortion^p (p={args.p:g}): {dist:.10g}"
    _emit(payload, args.out, summary)
    return EXIT_OK


# --- mot ------------------------------------------------------------------------


def cmd_mot(args):
    mu = _discrete(load_measure(args.mu), args.atoms)
    nu = _discrete(load_measure(args.nu), args.atoms)
    cost = load_cost(args.cost, args.p)
    value, pi = mot_value(mu, nu, cost, upper=args.upper)
    payload = {"value": value, "upper": args.upper, "cost": cost.to_dict(), "coupling": coupling_to_dict(pi)}
    label = "-V_{-c}" if args.upper else "V_c"
    _emit(payload, args.out, f"{label} = {value:.12g}")
    return EXIT_OK


# --- sweep ----------------------------------------------------------------------

SWEEP_COLUMNS = ["N", "K", "e2_N", "dp_K", "V", "W_p", "AW_p", "seconds", "status"]


@dataclass
class SweepReport:
    rows: list
    slopes: dict = field(default_factory=dict)

    def to_csv(self):
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in sorted(self.rows, key=lambda r: (r["N"], r["K"])):
            w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in SWEEP_COLUMNS])
        return buf.getvalue()


def _loglog_slope(ns, vals):
    ns, vals = np.asarray(ns, dtype=float), np.asarray(vals, dtype=float)
    ok = np.isfinite(vals) & (vals > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    X = np.log(ns[ok])
    Y = np.log(vals[ok])
    coef, res, *_ = np.polyfit(X, Y, 1, full=True)
    return float(coef[0]), float(np.sqrt(res[0] / ok.sum())) if len(res) else 0.0


def _error_columns(mu_in, nu_in, N, K, p):
    """``e_{2,N}`` and ``d_{p,K}`` of the input laws (exact when closed form)."""
    e2 = optimal_primal_1d(mu_in, N).distortion_p
    if p == 2:
        _, _, dp = optimal_dual_1d_quadratic(nu_in, K)
    else:
        _, _, dp = optimal_dual_1d(nu_in, K, p)
    return float(np.sqrt(max(e2, 0.0))), float(max(dp, 0.0) ** (1.0 / p))


def run_sweep(mu_in, nu_in, cost, ns, ks, p=1.0, atoms=256, with_distances=True, threads=1):
    mu = _discrete(mu_in, atoms)
    nu = _discrete(nu_in, atoms)
    _, pi = mot_value(mu, nu, cost)

    def one(nk):
        N, K = nk
        t0 = time.perf_counter()
        row = {"N": N, "K": K, "e2_N": float("nan"), "dp_K": float("nan"), "V": float("nan"),
               "W_p": float("nan"), "AW_p": float("nan"), "status": "ok"}
        try:
            row["e2_N"], row["dp_K"] = _error_columns(mu_in, nu_in, N, K, p)
            mu_hat = optimal_primal_1d(mu, N) if mu.dim == 1 else lloyd(mu, N)
            grid_nu, nu_check, _ = optimal_dual_1d_quadratic(nu, K)
            row["V"] = mot_value(mu_hat.pushforward, nu_check, cost)[0]
            if with_distances:
                b = build_pi_bar(pi, mu_hat.quantizer, grid_nu, p=p)
                row["W_p"] = coupling_distance_w_p(b.pi_bar, pi, p)
                row["AW_p"] = aw_p(b.pi_bar, pi, p)
        except (ConvergenceError, ConvexOrderError, LpError, ValueError) as exc:
            row["status"] = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
        row["seconds"] = round(time.perf_counter() - t0, 4)
        return row

    pairs = [(N, K) for N in ns for K in ks] if ks is not None else [(N, N) for N in ns]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, pairs))
    else:
        rows = [one(nk) for nk in pairs]
    rows.sort(key=lambda r: (r["N"], r["K"]))
    slopes = {}
    for col, key in (("e2_N", "N"), ("dp_K", "K")):
        slope, resid = _loglog_slope([r[key] for r in rows], [r[col] for r in rows])
        slopes[col] = {"slope": slope, "residual": resid}
    return SweepReport(rows, slopes)


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def cmd_sweep(args):
    mu = load_measure(args.mu)
    nu = load_measure(args.nu)
    cost = load_cost(args.cost, args.cost_p)
    report = run_sweep(mu, nu, cost, args.n_list, args.k_list, p=args.p, atoms=args.atoms,
                       with_distances=not args.no_distances, threads=_threads())
    text = report.to_csv()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    lines = [f"{k}: log-log slope {v['slope']:.4f} (fit residual {v['residual']:.2e})" for k, v in report.slopes.items()]
    print("\n".join(lines), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# --- reproduce ------------------------------------------------------------------


def _nu_u(u):
    r = np.sqrt(u)
    return DiscreteMeasure([0.0, r, 1.0], [u / 3, (1 + r) / 3, (2 - r - u) / 3])


def _w2_nu_u_closed(u):
    r = np.sqrt(u)
    return -1 / 6 + (u ** 1.5 - r) / 3 + 4 * ((1 - r) * (1 + r + u) ** 1.5 + u ** 2) / 3 ** 2.5


def _phi1(x):
    return np.maximum(0.4 - np.asarray(x), 0.0) ** 2


def _phi2(x):
    x = np.asarray(x)
    return np.where(x < 0.4, 0.0, np.where(x <= 0.6, (x - 0.4) ** 2, 0.04 + 0.4 * (x - 0.6)))


def reproduce_checks(atoms=2000, n_uniform=10):
    """Computed vs expected for the worked closed-form examples."""
    checks = []

    def add(name, computed, expected, tol):
        if isinstance(expected, (bool, str)):
            ok = computed == expected
        else:
            ok = bool(np.all(np.abs(np.asarray(computed, dtype=float) - np.asarray(expected, dtype=float)) <= tol))
        checks.append({"name": name, "computed": computed, "expected": expected, "tol": tol, "pass": ok})

    add("c_2 = (sqrt(17) - 1)/2", float(sqrt_density_coefficients(2)[2]), (np.sqrt(17) - 1) / 2, 1e-12)
    c2 = (np.sqrt(17) - 1) / 2
    add("invsqrt optimal 2-grid", optimal_primal_1d(Analytic1DMeasure("power", 0.5), 2).quantizer.x.tolist(),
        [1 / (3 * c2**2), (c2**2 + c2 + 1) / (3 * c2**2)], 1e-10)
    add("invsqrt closed-form 5-grid vs Lloyd",
        sqrt_density_grid(5).x.tolist(), optimal_primal_1d(Analytic1DMeasure("power", 0.5), 5).quantizer.x.tolist(), 1e-8)
    U = uniform01()
    N = n_uniform
    grid_p = optimal_primal_1d(U, N).quantizer
    grid_d, push_d, _ = optimal_dual_1d_quadratic(U, N)
    add(f"U[0,1] primal {N}-grid", grid_p.x.tolist(), ((2 * np.arange(1, N + 1) - 1) / (2 * N)).tolist(), 1e-9)
    add(f"U[0,1] dual {N}-grid", grid_d.x.tolist(), (np.arange(N) / (N - 1)).tolist(), 1e-6)
    wts = np.full(N, 1 / (N - 1))
    wts[[0, -1]] = 1 / (2 * (N - 1))
    add(f"U[0,1] dual {N}-weights", push_d.weights.tolist(), wts.tolist(), 1e-9)
    for p in (1, 2, 3):
        add(f"U[0,1] e_(p={p},N={N})", distortion(U, grid_p, p) ** (1 / p), 1 / (2 * (p + 1) ** (1 / p) * N), 1e-9)
        _, _, dp = dual_quantize_1d(U, grid_d, p)
        add(f"U[0,1] d_(p={p},N={N})", dp ** (1 / p), (2 / ((p + 1) * (p + 2))) ** (1 / p) / (N - 1), 1e-6)
    mu = tri2x()
    g3, _, d2 = optimal_dual_1d_quadratic(mu, 3)
    add("2x density: optimal dual 3-grid", g3.x.tolist(), [0.0, 1 / np.sqrt(3), 1.0], 1e-6)
    add("2x density: d_(2,3)^2 = 1/6 - 2/3^(5/2)", d2, 1 / 6 - 2 / 3**2.5, 1e-8)
    add("2x density: pushforward on {0,1/sqrt3,1} is nu_(1/3)", dual_quantize_1d(mu, g3)[0].weights.tolist(),
        _nu_u(1 / 3).weights.tolist(), 1e-9)
    add(f"W_2^2(2x density, nu_(1/3)) via {atoms} atoms", w_p(discretize(mu, atoms), _nu_u(1 / 3), 2)[0], 0.0199758, 2e-4)
    add("W_2^2(2x density, nu_(1/3)) exact vs closed form", w_p_analytic_1d(mu, _nu_u(1 / 3), 2),
        _w2_nu_u_closed(1 / 3), 1e-10)
    r = minimize_scalar(lambda u: w_p_analytic_1d(mu, _nu_u(u), 2), bounds=(0.05, 0.95), method="bounded",
                        options={"xatol": 1e-9})
    add("argmin_u W_2^2(2x density, nu_u)", float(r.x), 0.326, 1e-3)
    m6, m6c = mu6(), mu6check()
    add("mu6 not <=cvx mu6check (LP)", convex_order_feasible(m6, m6c), False, 0)
    add("mu6check not <=cvx mu6 (LP)", convex_order_feasible(m6c, m6), False, 0)
    add("mu6 incomparable (potentials)", convex_order_leq_1d(m6, m6c) or convex_order_leq_1d(m6c, m6), False, 0)
    d1 = float(m6.integrate(_phi1) - m6c.integrate(_phi1))
    d2_ = float(m6.integrate(_phi2) - m6c.integrate(_phi2))
    add("mu6 test functions: opposite signs", bool(d1 > 0 and d2_ < 0), True, 0)
    g6, p6, _ = optimal_dual_1d_quadratic(m6, 6)
    add("mu6 is its own optimal dual 6-quantization", p6.weights.tolist(), m6.weights.tolist(), 1e-12)
    add("mu6check = optimal dual 6-quantization of U[0,1]",
        optimal_dual_1d_quadratic(U, 6)[1].weights.tolist(), m6c.weights.tolist(), 1e-9)
    return checks


def cmd_reproduce(args):
    checks = reproduce_checks(atoms=args.atoms)
    failed = [c for c in checks if not c["pass"]]
    if args.json:
        print(json.dumps({"checks": checks, "all_pass": not failed}, indent=2, default=float))
    else:
        for c in checks:
            comp = c["computed"]
            if isinstance(comp, list):
                comp = "[" + ", ".join(f"{v:.10g}" for v in comp) + "]"
            elif isinstance(comp, float):
                comp = f"{comp:.10g}"
            exp = c["expected"]
            if isinstance(exp, list):
                exp = "[" + ", ".join(f"{v:.10g}" for v in exp) + "]"
            elif isinstance(exp, float):
                exp = f"{exp:.10g}"
            print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: computed {comp}, expected {exp} (tol {c['tol']:g})")
        print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


# --- entry point ----------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="martquant", description=__doc__.splitlines()[0], epilog=EPILOG,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="primal (Voronoi) or dual (split) quantization of a measure",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    q.add_argument("--measure", required=True)
    q.add_argument("--mode", choices=["primal", "dual"], default="primal")
    q.add_argument("--n", type=int, required=True, help="grid size")
    q.add_argument("--p", type=float, default=2.0, help="distortion exponent (grids are optimized for p=2, "
                   "except dual grids which use a coordinate search for p != 2)")
    q.add_argument("--lloyd", action="store_true", help="primal mode, 1D discrete input: run Lloyd instead of "
                   "the exact dynamic program")
    q.add_argument("--grid", help="dual mode: evaluate this grid JSON {'points': ...} instead of optimizing")
    q.add_argument("--tol", type=float, default=1e-12)
    q.add_argument("--max-iter", type=int, default=100_000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", help="write JSON here (default: stdout, summary on stderr)")
    q.set_defaults(func=cmd_quantize)

    m = sub.add_parser("mot", help="martingale optimal transport value between two measures",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    m.add_argument("--mu", required=True)
    m.add_argument("--nu", required=True)
    m.add_argument("--cost", default="abs_power", help="cost kind (abs_power, pos_power, neg_power, "
                   "scalar_product) or a CostSpec JSON file")
    m.add_argument("--p", type=float, default=1.0, help="exponent for the power costs")
    m.add_argument("--upper", action="store_true", help="report -V_{-c}, the upper bound")
    m.add_argument("--atoms", type=int, default=64, help="atoms used to discretize closed-form inputs")
    m.add_argument("--out")
    m.set_defaults(func=cmd_mot)

    s = sub.add_parser("sweep", help="convergence sweep over grid sizes (CSV)",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--cost", default="abs_power")
    s.add_argument("--cost-p", type=float, default=1.0)
    s.add_argument("--n-list", type=_int_list, default=[4, 8, 16, 32, 64])
    s.add_argument("--k-list", type=_int_list, default=None, help="default: K = N on each row")
    s.add_argument("--p", type=float, default=1.0, help="exponent of d_p, W_p and AW_p")
    s.add_argument("--atoms", type=int, default=256, help="atoms used to discretize closed-form inputs")
    s.add_argument("--no-distances", action="store_true", help="skip the W_p and AW_p columns")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("reproduce", help="recompute every closed-form constant of the worked examples",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("--json", action="store_true")
    r.add_argument("--atoms", type=int, default=2000,
                   help="discretization of the 2x density for the W_2^2 check (small values make it FAIL)")
    r.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConvexOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
