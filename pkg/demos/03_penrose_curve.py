"""The Penrose curve ``theta -> P(i theta)`` and its real-axis crossings."""

from kuramoto_mfg import ModelParams, trace_curve, two_dirac
from kuramoto_mfg.penrose import count_zeros

p = ModelParams(0.0, 1.0, 1.0)
d = two_dirac(2.0)
curve = trace_curve(d, p)
for t, r in curve.crossings:
    print(f"crossing at theta={t:+.6f}  Re P={r:.6f}  coupling 2/Re P={2 / r:.4f}")

# zeros of 1 - (kappa/2) P in the strip, by the argument principle
for kappa in (2.0, 3.5, 5.0):
    print(f"kappa={kappa}: {count_zeros(d, p, kappa)} zeros in the strip")
