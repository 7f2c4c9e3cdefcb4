"""Environment families: the cumulant generating function and its tilt.

Walks through the three shipped families, checks the closed-form log-MGF
against numerical integration, and shows what exponential tilting does to
each law.
"""

import numpy as np

from polymerlab import environment as env

rng = np.random.default_rng(0)

print("log-MGF lambda(beta) = log E[exp(beta w)]")
print(f"{'family':>20} {'beta':>5} {'closed form':>14} {'quadrature':>14}")
for model in (env.gaussian(), env.two_point(-1, 1, 0.5), env.uniform(0, 1)):
    for beta in (0.5, 1.0, 2.0):
        closed = np.exp(env.log_mgf(model, beta))
        quad = env.log_mgf_quadrature(model, beta)
        print(f"{model.name:>20} {beta:>5} {closed:>14.8f} {quad:>14.8f}")

print("\ntilting shifts mass toward large values; the weights"
      " exp(beta w - lambda) average to one:")
for model in (env.gaussian(), env.uniform(0, 1)):
    beta = 0.8
    base = env.sample_env(model, rng, size=200_000)
    tilt = env.sample_tilted(model, beta, rng, size=200_000)
    w = np.exp(beta * base - env.log_mgf(model, beta))
    print(f"{model.name:>20}: base mean {base.mean():+.4f}, "
          f"tilted mean {tilt.mean():+.4f}, weight mean {w.mean():.5f}")

print("\nthe pair-overlap factor chi(beta) = exp(lambda(2b) - 2 lambda(b)):")
for beta in (0.0, 0.3, 0.6, 1.0):
    print(f"  beta={beta}: gaussian {env.chi(env.gaussian(), beta):.5f}, "
          f"two-point {env.chi(env.two_point(-1, 1, 0.5), beta):.5f}")
