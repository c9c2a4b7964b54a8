"""Two dual quantizations need not be comparable in convex order.

mu6 is its own optimal 6-point dual quantization, mu6check is the optimal
6-point dual quantization of U[0,1]; yet neither dominates the other, so
no martingale coupling links them in either direction.

    python3 demos/incomparable_quantizations.py
"""
import numpy as np

import martquant as mq

a, b = mq.mu6(), mq.mu6check()
print("mu6      atoms", a.x, "\n         weights", np.round(a.weights, 4))
print("mu6check atoms", b.x, "\n         weights", np.round(b.weights, 4))
print("same mean:", a.mean(), b.mean())

xs = np.union1d(a.x, b.x)
gap = mq.potential(b)(xs) - mq.potential(a)(xs)
print("\npotential(mu6check) - potential(mu6) at the atoms:", np.round(gap, 4))
print("changes sign -> incomparable")

print("martingale coupling mu6 -> mu6check exists:", mq.convex_order_feasible(a, b))
print("martingale coupling mu6check -> mu6 exists:", mq.convex_order_feasible(b, a))

phi1 = lambda x: np.maximum(0.4 - x, 0.0) ** 2
phi2 = lambda x: np.where(x < 0.4, 0.0, np.where(x <= 0.6, (x - 0.4) ** 2, 0.04 + 0.4 * (x - 0.6)))
print("\nconvex witnesses, int phi d(mu6) - int phi d(mu6check):")
print(f"  phi1: {a.integrate(phi1) - b.integrate(phi1):+.6f}")
print(f"  phi2: {a.integrate(phi2) - b.integrate(phi2):+.6f}")
