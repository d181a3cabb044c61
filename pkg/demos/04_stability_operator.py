"""Weighted norm of the linearized operator and the resulting certificate.

When ``kappa ||L|| < 1`` in an exponentially weighted norm, the resolvent
exists by a Neumann series and perturbations decay at rate ``lambda``.
"""

from kuramoto_mfg import FrequencyDistribution, ModelParams, op_norm_L
from kuramoto_mfg.stability import norm_bound_simple, norm_exact

p = ModelParams(0.0, 1.0, 2.0)
g = FrequencyDistribution.gaussian()
for lam in (0.01, 0.1, 0.5):
    disc = op_norm_L(p, g, lam)
    print(f"lambda={lam:4.2f}  ||L|| discrete={disc:.6f}  closed form={norm_exact(p, g, lam):.6f}"
          f"  envelope={norm_bound_simple(p, lam):.6f}  certified below kappa={1 / disc:.3f}")
