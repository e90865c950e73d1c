"""Gaussian width of the nuclear-norm descent cone, sampled and bounded.

The supremum of <G, x> over the cone intersected with the unit ball is the
distance from G to the polar cone, a one-dimensional convex problem after
rotating G into the singular bases of the base point.
"""

import numpy as np

from hankel_arma import DescentConeSpec, TheoryContext, delta_bound, mc_H_norms, mc_width

print(" t  r   width^2   dimension   w^2 + 1   closed-form bound")
for t in (4, 6, 8):
    for r in (1, 2):
        w = mc_width(DescentConeSpec.random(t, r, seed=0), 10_000, seed=t + r)
        bound = delta_bound(TheoryContext(t=t, T=2 * t, Sigma=np.eye(t)), r)
        print(f"{t:2d} {r:2d} {w['width'] ** 2:9.2f} {w['dimension']:11.2f} {w['width'] ** 2 + 1:9.2f}"
              f" {bound:19.1f}")

print("\nmoments of a t x t standard Gaussian matrix")
for t in (2, 4, 8):
    m = mc_H_norms(t, 50_000, seed=t)
    print(f"t={t}: E||H|| = {m['mean_op']:.3f} (Gordon 2 sqrt(t) = {m['gordon']:.3f}), "
          f"E||H||_F^2 = {m['mean_fro2']:.2f} (t^2 = {m['fro2_exact']:.0f}, 2t = {m['fro2_paper']:.0f})")
