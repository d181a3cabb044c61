"""Fixed points of the symmetric equilibrium map as the coupling grows.

Below the explicit critical coupling the only fixed point is zero; above it a
nonzero branch appears. For the two-point law at kappa = 9 a pair of nonzero
fixed points appears already below kappa_c (a subcritical fold).
"""

from kuramoto_mfg import ModelParams, find_fixed_points, kappa_c, two_dirac

d = two_dirac(2.0)
kc = kappa_c(d, ModelParams(0.0, 1.0, 1.0))
print(f"kappa_c = {kc:.4f}")
for kappa in (4.0, 8.0, 9.0, 12.0):
    rep = find_fixed_points(ModelParams(kappa, 1.0, 1.0), d, slopes=False)
    pts = ", ".join(f"{a:.4f}" for a in rep.fixed_points)
    print(f"kappa={kappa:5.1f}  fixed points: {pts}")
