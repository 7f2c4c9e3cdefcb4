"""Plane-started field, homogenization, and fluctuation-variance scaling.

The flat-initial-condition field on a periodic box averages to the test
function's integral under diffusive rescaling; the centered functional's
variance decays with the horizon (slope -(d-2)/2 in the square-integrable
regime).  Reduced scale here; the acceptance run uses n up to 128 with 500
replicas per horizon.
"""

import math

import numpy as np

from polymerlab import environment as env
from polymerlab import estimators as est
from polymerlab import field
from polymerlab import walk

g = env.gaussian()
k3 = walk.srw(3)
f = field.bump()

print("homogenization: the rescaled field average approaches integral(f)")
ax = np.linspace(-1, 1, 201)
mesh = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
integral = f(mesh).sum() * (ax[1] - ax[0]) ** 3
xs, ri, B = est._plane_samples(0.2, 16, 150, g, k3, 9, f)
print(f"  n=16, box half-width {B}: mean field average "
      f"{ri.mean():.4f} +- {ri.std(ddof=1)/math.sqrt(len(ri)):.4f} "
      f"vs integral(f) = {integral:.4f}")

print("\nvariance of the centered functional across horizons:")
rows, slope, err, predicted = est.fluctuation_scaling(
    0.25, f, [6, 12, 24, 48], 64, g, k3, master_seed=10)
for r in rows:
    print(f"  n={r['n']:>3} (box {r['box']:>3}): var = {r['var']:.3e} "
          f"+- {r['var_se']:.1e}")
print(f"fitted log-log slope: {slope:.3f} +- {err:.3f} "
      f"(square-integrable-regime prediction: {predicted})")
print("(small horizons bias the slope; the acceptance window "
      "[-0.65, -0.35] applies to n in [16, 128])")
