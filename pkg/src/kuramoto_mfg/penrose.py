"""The Penrose function, its curve on the imaginary axis and zero counting.

    P(z) = int 1 / ((gamma + i w - z)(sigma^2/2 + z - i w)) g(dw)

is holomorphic on the strip ``-sigma^2/2 < Re z < gamma``. Zeros of
``1 - (kappa/2) P`` in ``0 <= Re z <= beta`` obstruct stability of the uniform
state, and ``kappa_P = 2 / max{Re P(i theta) : Im P(i theta) = 0, Re P > 0}`` is
the smallest coupling for which the curve ``P(i R)`` reaches ``2/kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .model import FrequencyDistribution, ModelParams, kappa_c, mean_inverse

__all__ = [
    "StripError",
    "ZeroCountError",
    "P",
    "P_prime",
    "PenroseCurve",
    "trace_curve",
    "default_theta_max",
    "kappa_P",
    "count_zeros",
    "N_quartic",
    "QuarticRoots",
    "ThresholdReport",
    "threshold_report",
    "Q",
    "Q_prime",
]


class StripError(ValueError):
    """``z`` lies outside the strip where ``P`` is defined."""


class ZeroCountError(RuntimeError):
    """The argument-principle integral is unreliable."""


def _check_strip(params, z):
    re = np.real(z)
    lo, hi = -params.half_var, params.gamma
    if np.any(re <= lo) or np.any(re >= hi):
        raise StripError(f"Re z must lie in ({lo!r}, {hi!r}); got range "
                         f"[{np.min(re)!r}, {np.max(re)!r}]")


def _P_raw(dist, params, z, power=1):
    # partial fractions: 1/(ab) = (1/a + 1/b)/(gamma + s), a = gamma + i w - z, b = s + z - i w
    z = np.asarray(z, dtype=complex)
    g, s = params.gamma, params.half_var
    first = mean_inverse(dist, g - z, power)
    second = mean_inverse(dist.reflected(), s + z, power)
    if power == 1:
        return (first + second) / (g + s)
    return (first - second) / (g + s)


def P(dist: FrequencyDistribution, params: ModelParams, z):
    """Penrose function at ``z`` (scalar or array) inside the strip."""
    _check_strip(params, z)
    if np.ndim(z) == 0:
        return complex(_P_raw(dist, params, z))
    return _P_raw(dist, params, z)


def P_prime(dist: FrequencyDistribution, params: ModelParams, z):
    """Derivative ``P'(z)`` of the Penrose function."""
    _check_strip(params, z)
    out = _P_raw(dist, params, z, power=2)
    return complex(out) if np.ndim(out) == 0 else out


def default_theta_max(dist: FrequencyDistribution, params: ModelParams, level: float = 1e-3):
    """``theta`` with ``C (1 + m2) / theta^2 = level``, ``C = 2/(gamma sigma^2) + beta``.

    A computable stand-in for the decay constant of ``|P| + |P'|`` along
    horizontal lines; the boundary check in the tests validates it.
    """
    m2 = dist.second_moment
    if not math.isfinite(m2):
        raise ValueError("the Penrose analysis requires a finite second moment")
    c = 2.0 / (params.gamma * params.sigma**2) + params.beta
    return math.sqrt(c * (1.0 + m2) / level)


@dataclass
class PenroseCurve:
    thetas: np.ndarray
    values: np.ndarray
    crossings: list = field(default_factory=list)

    @property
    def theta_max(self) -> float:
        return float(self.thetas[-1])

    def positive_crossings(self):
        return [(t, r) for t, r in self.crossings if r > 0]

    def rows(self):
        """``(theta, Re P, Im P)`` rows for CSV export."""
        return np.column_stack([self.thetas, self.values.real, self.values.imag])


def trace_curve(dist: FrequencyDistribution, params: ModelParams,
                theta_max: float | None = None, samples: int = 4001) -> PenroseCurve:
    """Sample ``P(i theta)`` on ``[-theta_max, theta_max]`` and locate real crossings.

    Each sign change of ``Im P`` is refined with Brent's method on the
    bracketing pair; exact zeros on the sample grid are kept as they are.
    Crossings closer than ``1e-8`` are merged.
    """
    theta_max = default_theta_max(dist, params) if theta_max is None else float(theta_max)
    if samples < 3:
        raise ValueError("need at least 3 samples")
    thetas = np.linspace(-theta_max, theta_max, samples)
    values = _P_raw(dist, params, 1j * thetas)
    im = values.imag

    def imag_at(t):
        return float(_P_raw(dist, params, 1j * t).imag)

    found = []
    for i in range(samples):
        if im[i] == 0.0:
            found.append(float(thetas[i]))
    sign_change = np.flatnonzero(im[:-1] * im[1:] < 0)
    for i in sign_change:
        t = brentq(imag_at, thetas[i], thetas[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps,
                   maxiter=100)
        found.append(float(t))
    found.sort()
    merged = []
    for t in found:
        if not merged or abs(t - merged[-1]) > 1e-8:
            merged.append(t)
    crossings = [(t, float(_P_raw(dist, params, 1j * t).real)) for t in merged]
    return PenroseCurve(thetas, values, crossings)


def kappa_P(dist: FrequencyDistribution, params: ModelParams, curve: PenroseCurve | None = None):
    """Penrose threshold ``2 / p*``; ``math.inf`` if no crossing has ``Re P > 0``."""
    curve = curve or trace_curve(dist, params)
    pos = curve.positive_crossings()
    if not pos:
        return math.inf
    return 2.0 / max(r for _, r in pos)


def count_zeros(dist: FrequencyDistribution, params: ModelParams, kappa: float,
                strip=None, theta_cap: float | None = None, boundary_tol: float = 1e-6,
                boundary_samples: int = 4001) -> int:
    """Number of zeros of ``1 - (kappa/2) P`` inside ``[x_lo, x_hi] x [-theta_cap, theta_cap]``.

    The winding number of ``f = 1 - kappa P / 2`` is computed as
    ``(1 / 2 pi i) \\oint f'/f dz`` with adaptive Gauss-Kronrod quadrature on
    each side of the rectangle. Raises :class:`ZeroCountError` when ``|f|``
    gets below ``boundary_tol`` on the contour or the integral is farther
    than 0.1 from an integer.
    """
    if kappa == 0.0:
        return 0
    x_lo, x_hi = (0.0, params.beta) if strip is None else (float(strip[0]), float(strip[1]))
    if not x_lo < x_hi:
        raise ValueError("strip must satisfy x_lo < x_hi")
    _check_strip(params, np.array([x_lo, x_hi]))
    cap = default_theta_max(dist, params) if theta_cap is None else float(theta_cap)
    corners = [complex(x_lo, -cap), complex(x_hi, -cap), complex(x_hi, cap),
               complex(x_lo, cap), complex(x_lo, -cap)]

    def f(z):
        return 1.0 - 0.5 * kappa * _P_raw(dist, params, z)

    s = np.linspace(0.0, 1.0, boundary_samples)
    for a, b in zip(corners[:-1], corners[1:]):
        mag = np.abs(f(a + (b - a) * s))
        fmin = float(np.min(mag))
        # refine every sampled local minimum; a zero can hide between samples
        inner = np.flatnonzero((mag[1:-1] <= mag[:-2]) & (mag[1:-1] <= mag[2:])) + 1
        ds = s[1] - s[0]
        for i in inner:
            # |f|^2 is smooth at a zero, and a local offset keeps the tolerance absolute
            res = minimize_scalar(lambda u: abs(f(a + (b - a) * (s[i] + u * ds))) ** 2,
                                  bounds=(-1.0, 1.0), method="bounded", options={"xatol": 1e-12})
            fmin = min(fmin, math.sqrt(float(res.fun)))
        if fmin < boundary_tol:
            raise ZeroCountError(f"|1 - kappa P/2| = {fmin:.3e} on the contour side {a}->{b}; "
                                 "a zero lies on or near the boundary")

    def log_deriv(z):
        return -0.5 * kappa * P_prime(dist, params, z) / f(z)

    total = 0j
    for a, b in zip(corners[:-1], corners[1:]):
        d = b - a
        val, _ = quad(lambda t: log_deriv(a + d * t) * d, 0.0, 1.0, complex_func=True,
                      epsabs=1e-9, epsrel=1e-9, limit=500)
        total += val
    winding = total / (2j * math.pi)
    n = round(winding.real)
    if abs(winding - n) > 0.1:
        raise ZeroCountError(f"winding integral {winding:.6f} is not near an integer; "
                             "increase theta_cap")
    return int(n)


def Q(z, omega, params: ModelParams):
    """``(z + sigma^2/2 - i omega)(gamma + i omega - z)``."""
    return (z + params.half_var - 1j * omega) * (params.gamma + 1j * omega - z)


def Q_prime(z, omega, params: ModelParams):
    """``dQ/dz``."""
    return (params.gamma + 1j * omega - z) - (z + params.half_var - 1j * omega)


def _q_coeffs(params, omega):
    # ascending powers of z
    return np.polynomial.polynomial.polymul([params.half_var - 1j * omega, 1.0],
                                            [params.gamma + 1j * omega, -1.0])


@dataclass
class QuarticRoots:
    coefficients: np.ndarray  # ascending powers, real
    roots: np.ndarray
    case: str
    max_residual: float

    def in_strip(self, x_lo: float, x_hi: float):
        return [r for r in self.roots if x_lo <= r.real <= x_hi]


def N_quartic(params: ModelParams, omega0: float, kappa: float,
              double_tol: float = 1e-7, real_tol: float = 1e-9) -> QuarticRoots:
    """The two-Dirac characteristic quartic ``N(z)`` and its roots.

    ``N = 4 Q(z, w0) Q(z, -w0) - kappa (Q(z, -w0) + Q(z, w0))``. Roots come from
    the companion matrix. ``case`` is ``"complex-quadruple"`` (no real root),
    ``"four-real"``, ``"double-real"`` (two real roots closer than
    ``double_tol``) or ``"mixed"`` (two real roots and a pair on
    ``Re z = beta/2``). ``max_residual`` is the largest ``|2 - kappa P(r)|``
    over roots that are not poles of ``P`` (``P`` extended off the strip).
    """
    if omega0 < 0:
        raise ValueError("omega0 must be >= 0")
    poly = np.polynomial.polynomial
    qp, qm = _q_coeffs(params, omega0), _q_coeffs(params, -omega0)
    coeffs = poly.polysub(4.0 * poly.polymul(qp, qm), kappa * poly.polyadd(qp, qm))
    if np.max(np.abs(coeffs.imag)) > 1e-12 * np.max(np.abs(coeffs)):
        raise ArithmeticError("quartic coefficients are not real")
    coeffs = coeffs.real
    roots = poly.polyroots(coeffs)
    roots = np.array(sorted(roots, key=lambda r: (r.real, r.imag)))
    is_real = np.abs(roots.imag) < real_tol * (1.0 + np.abs(roots))
    real_roots = np.sort(roots[is_real].real)
    if real_roots.size >= 2 and np.min(np.diff(real_roots)) < double_tol:
        case = "double-real"
    elif real_roots.size == 4:
        case = "four-real"
    elif real_roots.size == 0:
        case = "complex-quadruple"
    else:
        case = "mixed"
    dist = FrequencyDistribution.dirac([(omega0, 0.5), (-omega0, 0.5)]) if omega0 > 0 else \
        FrequencyDistribution.dirac([(0.0, 1.0)])
    worst = 0.0
    for r in roots:
        qa, qb = Q(r, omega0, params), Q(r, -omega0, params)
        if min(abs(qa), abs(qb)) < 1e-8:
            continue
        worst = max(worst, abs(2.0 - kappa * complex(_P_raw(dist, params, r))))
    return QuarticRoots(coeffs, roots, case, worst)


@dataclass
class ThresholdReport:
    kappa_c: float
    kappa_P: float
    zero_counts: list
    params: ModelParams
    dist: FrequencyDistribution
    crossings: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.kappa_c - self.kappa_P

    def as_dict(self) -> dict:
        return {
            "kappa_c": self.kappa_c,
            "kappa_P": self.kappa_P,
            "gap": self.gap,
            "zero_counts": [[k, n] for k, n in self.zero_counts],
            "crossings": [[t, r] for t, r in self.crossings],
            "params": self.params.as_dict(),
            "dist": self.dist.as_dict(),
        }


def threshold_report(dist: FrequencyDistribution, params: ModelParams, kappas=(),
                     strip=None, theta_max: float | None = None) -> ThresholdReport:
    """Both thresholds for ``(g, beta, sigma)`` plus zero counts at the given couplings."""
    curve = trace_curve(dist, params, theta_max)
    counts = [(float(k), count_zeros(dist, params, k, strip)) for k in kappas]
    return ThresholdReport(kappa_c(dist, params), kappa_P(dist, params, curve), counts, params,
                           dist, curve.crossings)
