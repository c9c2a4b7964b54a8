"""Closed-form grids next to what the solvers find.

    python3 demos/closed_forms.py
"""
import numpy as np

import martquant as mq

U = mq.uniform01()

print("U[0,1], primal vs dual quadratic errors")
print(f"{'N':>4} {'e_2,N':>12} {'1/(2 sqrt3 N)':>14} {'d_2,N':>12} {'1/(sqrt6 (N-1))':>16}")
for N in (2, 4, 8, 16, 32):
    e = np.sqrt(mq.optimal_primal_1d(U, N).distortion_p)
    d = np.sqrt(mq.optimal_dual_1d_quadratic(U, N)[2])
    print(f"{N:>4} {e:12.8f} {1 / (2 * np.sqrt(3) * N):14.8f} {d:12.8f} {1 / (np.sqrt(6) * (N - 1)):16.8f}")

# density 1/(2 sqrt x): the recursion on the cell boundaries gives the grid directly
m = mq.invsqrt()
for N in (2, 5):
    closed = mq.sqrt_density_grid(N).x
    solved = mq.optimal_primal_1d(m, N).quantizer.x
    print(f"\ninverse-sqrt density, N={N}")
    print("  recursion:", np.round(closed, 10))
    print("  solver:   ", np.round(solved, 10))

# density 2x on [0,1]: the three-point dual grid and its pushforward
mu = mq.tri2x()
grid, push, d2 = mq.optimal_dual_1d_quadratic(mu, 3)
print("\ndensity 2x, optimal 3-point dual grid:", np.round(grid.x, 8), "(1/sqrt3 =", round(1 / np.sqrt(3), 8), ")")
print("  weights:", np.round(push.weights, 8))
print(f"  d_2,3^2 = {d2:.10f}   1/6 - 2/3^(5/2) = {1 / 6 - 2 / 3**2.5:.10f}")
print(f"  W_2^2(mu, pushforward) = {mq.w_p_analytic_1d(mu, push, 2):.9f}")
