"""MOT value on quantized marginals approaching the full value.

mu: inverse-sqrt law moved to [0.3, 0.9] (mean 1/2), nu: U[0,1]; both
discretized, mu <=_cvx nu.  The primal grid quantizes mu from below and
the dual grid quantizes nu from above, so every pair of quantized
marginals stays in convex order and the MOT LP on the small grids is
feasible.

    python3 demos/mot_convergence.py [atoms]
"""
import sys
import time

import martquant as mq

atoms = int(sys.argv[1]) if len(sys.argv) > 1 else 96
mu = mq.discretize(mq.power(0.5, 0.3, 0.9), atoms)
nu = mq.discretize(mq.uniform01(), atoms)
cost = mq.CostSpec("abs_power", 1.0)
print("mu <=_cvx nu:", mq.convex_order_leq_1d(mu, nu))

t0 = time.time()
ref, pi = mq.mot_value(mu, nu, cost)
print(f"V(mu, nu) = {ref:.8f}   ({atoms} x {atoms} LP, {time.time() - t0:.1f}s)\n")

print(f"{'N=K':>4} {'V(mu_hat, nu_check)':>20} {'error':>10} {'W_1(pi_bar, pi)':>16} {'AW_1':>10}")
for N in (4, 8, 16, 32):
    prim = mq.optimal_primal_1d(mu, N)
    grid_nu, nu_check, _ = mq.optimal_dual_1d_quadratic(nu, N)
    v, _ = mq.mot_value(prim.pushforward, nu_check, cost)
    b = mq.build_pi_bar(pi, prim.quantizer, grid_nu, p=1)
    w = mq.coupling_distance_w_p(b.pi_bar, pi, 1)
    aw = mq.aw_p(b.pi_bar, pi, 1)
    print(f"{N:>4} {v:20.8f} {abs(v - ref):10.2e} {w:16.6f} {aw:10.6f}")
