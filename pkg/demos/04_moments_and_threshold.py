"""Exact moments of the partition mass and the L2-boundedness threshold.

The second moment has two independent exact routes (replica transfer matrix
and renewal/pinning recursion); their agreement is the backbone of the
toolkit's correctness story.  The threshold beta_2 solves
chi(beta) * pi = 1 and separates bounded from exponentially growing second
moments; at criticality the pinning value grows like sqrt(n) in d = 3 and
linearly for d >= 5.
"""

import numpy as np

from polymerlab import environment as env
from polymerlab import exact
from polymerlab import walk

g = env.gaussian()

print("E[W_n^2] by replica transfer matrix vs renewal recursion, srw(2):")
k2 = walk.srw(2)
table2 = walk.first_collision_law(walk.return_prob_series(k2, 8))
for beta in (0.2, 0.5):
    chi = env.chi(g, beta)
    for n in (2, 5, 8):
        a = exact.replica_moment(k2, g, beta, 2, n)
        b = exact.second_moment_renewal(table2, chi, n)
        print(f"  beta={beta}, n={n}: {a:.12f} vs {b:.12f} "
              f"(diff {abs(a-b):.1e})")

print("\nhigher moments from the replica transfer matrix, srw(1), n=4:")
tp = env.two_point(-1, 1, 0.5)
for p in (1, 2, 3):
    print(f"  E[W^({p})] = {exact.replica_moment(walk.srw(1), tp, 0.6, p, 4):.8f}")

k3 = walk.srw(3)
res = exact.solve_beta2(k3, g)
print(f"\nL2 threshold for srw(3) + gaussian: beta_2 = {res.value:.10f}")
print(f"  residual |chi(beta_2) pi - 1| = {res.residual:.2e}, "
      f"pi = {res.pi:.10f}")
print(f"  srw(1): {exact.solve_beta2(walk.srw(1), g).kind} "
      f"(recurrent difference walk)")
print(f"  bounded two-point env: {exact.solve_beta2(k3, tp).kind} "
      f"(chi tops out below 1/pi)")

print("\npinning growth at criticality (chi = 1/pi):")
for d in (3, 5):
    k = walk.srw(d)
    coll = walk.collision_probability(k)
    table = walk.first_collision_law(walk.return_prob_series(k, 10**4))
    grid = np.unique(np.round(np.logspace(2, 4, 13)).astype(int))
    fit = exact.critical_growth_fit(table, 1 / coll.pi, grid, pi=coll.pi)
    want = 0.5 if d == 3 else 1.0
    print(f"  d={d}: log-log slope {fit.slope:.4f} +- {fit.stderr:.4f} "
          f"(theory: {want})")

print("\noff criticality the growth rate is explicit:")
table3 = walk.first_collision_law(walk.return_prob_series(k3, 400))
pi3 = walk.collision_probability(k3).pi
for chi_mult in (0.8, 1.0, 1.2):
    rate = exact.pinning_growth_rate(table3, chi_mult / pi3)
    print(f"  chi = {chi_mult:.1f}/pi: rate {rate:.6f}")
