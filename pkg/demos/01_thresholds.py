"""Explicit critical coupling versus the Penrose threshold.

For a two-point frequency law the incoherent state loses linear stability
(Penrose threshold) well before the explicit coupling at which a nontrivial
equilibrium bifurcates. For a Gaussian law the two coincide.
"""

import numpy as np

from kuramoto_mfg import FrequencyDistribution, ModelParams, kappa_c, kappa_P, two_dirac
from kuramoto_mfg.penrose import N_quartic

p = ModelParams(kappa=0.0, beta=1.0, sigma=1.0)
for w0 in (0.5, 1.0, 2.0, 3.0):
    d = two_dirac(w0)
    print(f"two-dirac w0={w0:3.1f}  kappa_c={kappa_c(d, p):8.4f}  kappa_P={kappa_P(d, p):7.4f}")

g = FrequencyDistribution.gaussian()
pg = ModelParams(kappa=0.0, beta=1.0, sigma=2.0)
print(f"gaussian         kappa_c={kappa_c(g, pg):8.4f}  kappa_P={kappa_P(g, pg):7.4f}")

# at the Penrose threshold two roots of the dispersion quartic reach Re z = 0
kp = kappa_P(two_dirac(2.0), p)
roots = N_quartic(p, 2.0, kp).roots
print("quartic roots at kappa_P:", np.round(roots, 6))
