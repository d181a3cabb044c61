"""Stationary equilibria as fixed points of the order-parameter map.

``F_kappa(alpha) = kappa (int int cos dnu^omega g(domega), int int sin dnu^omega g(domega))``
where ``nu^omega`` is the invariant law of the player with frequency ``omega`` facing
the cost generated by ``alpha``. For symmetric ``g`` the search reduces to the
scalar map ``G_kappa(a) = F_kappa(a, 0)[0]`` on the half-line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .hjb import (HJBConvergenceError, OrderParameters, TorusGrid, invariant_measure,
                  solve_stationary_hjb)
from .model import FrequencyDistribution, ModelParams, integrate_g, lorentz_average

__all__ = [
    "F_kappa",
    "G_kappa",
    "dF_origin",
    "FixedPointReport",
    "find_fixed_points",
    "newton_fixed_point",
    "g_map_slope",
]


def _harmonics(params, dist, alpha, grid):
    c = np.empty(dist.nodes.size)
    s = np.empty(dist.nodes.size)
    for i, omega in enumerate(dist.nodes):
        v = solve_stationary_hjb(params, float(omega), alpha, grid)
        nu = invariant_measure(params, float(omega), v)
        c[i] = nu.moment(np.cos)
        s[i] = nu.moment(np.sin)
    return float(dist.weights @ c), float(dist.weights @ s)


def F_kappa(params: ModelParams, dist: FrequencyDistribution, alpha: OrderParameters,
            grid: TorusGrid | None = None) -> OrderParameters:
    """Order parameters regenerated by the best responses to ``alpha``.

    Raises :class:`~kuramoto_mfg.hjb.HJBConvergenceError` carrying the
    offending ``omega`` if any per-node HJB solve fails.
    """
    grid = grid or TorusGrid()
    c, s = _harmonics(params, dist, alpha, grid)
    return OrderParameters(params.kappa * c, params.kappa * s)


def G_kappa(params: ModelParams, dist: FrequencyDistribution, alpha: float,
            grid: TorusGrid | None = None) -> float:
    """Scalar map on the symmetric line, ``G(a) = F_kappa((a, 0))[0]``."""
    if not dist.symmetric:
        raise ValueError("G_kappa requires a distribution declared symmetric")
    if alpha == 0.0:
        return 0.0
    return F_kappa(params, dist, OrderParameters(float(alpha), 0.0), grid).alpha1


def dF_origin(params: ModelParams, dist: FrequencyDistribution) -> np.ndarray:
    """Jacobian of ``F_kappa`` at the origin from its closed-form g-integral."""
    g, s2 = params.gamma, params.sigma**2

    def entries(w):
        den = (g * g + w * w) * (s2 * s2 + 4.0 * w * w)
        diag = (g * s2 + 2.0 * w * w) / den
        off = (s2 - 2.0 * g) * w / den
        return np.stack([diag, off])

    # one pass: real part carries the diagonal, imaginary part the off-diagonal
    if dist.kind in ("gaussian", "uniform"):
        both = 0.5 * lorentz_average(dist, g, 0.5 * s2)
    else:
        both = integrate_g(dist, lambda w: entries(w)[0] + 1j * entries(w)[1])
    diag, off = both.real, both.imag
    k = params.kappa
    return k * np.array([[diag, off], [-off, diag]])


def g_map_slope(params, dist, alpha, grid=None, step=1e-4):
    """Central finite difference of ``G_kappa`` (one-sided at the origin is avoided
    by oddness: ``G(-a) = -G(a)``)."""
    grid = grid or TorusGrid()
    if alpha < step:
        return (G_kappa_signed(params, dist, alpha + step, grid)
                - G_kappa_signed(params, dist, alpha - step, grid)) / (2 * step)
    return (G_kappa(params, dist, alpha + step, grid)
            - G_kappa(params, dist, alpha - step, grid)) / (2 * step)


def G_kappa_signed(params, dist, alpha, grid=None):
    """``G_kappa`` extended to negative arguments (the map is odd)."""
    if alpha < 0:
        return -G_kappa(params, dist, -alpha, grid)
    return G_kappa(params, dist, alpha, grid)


@dataclass
class FixedPointReport:
    kappa: float
    fixed_points: list
    derivative_at_zero: np.ndarray
    residuals: list
    slopes: list = field(default_factory=list)
    tangency_suspected: list = field(default_factory=list)
    scan: list = field(default_factory=list)
    failure_boundary: float | None = None

    def as_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "fixed_points": [float(a) for a in self.fixed_points],
            "residuals": [float(r) for r in self.residuals],
            "slopes": [float(s) for s in self.slopes],
            "tangency_suspected": [float(a) for a in self.tangency_suspected],
            "derivative_at_zero": np.asarray(self.derivative_at_zero).tolist(),
            "failure_boundary": self.failure_boundary,
        }


def find_fixed_points(params: ModelParams, dist: FrequencyDistribution,
                      alpha_max: float | None = None, step: float | None = None,
                      grid: TorusGrid | None = None, tol: float = 1e-8,
                      slopes: bool = True, mapper=map) -> FixedPointReport:
    """Fixed points of ``G_kappa`` on ``[0, alpha_max]``.

    The residual ``G(a) - a`` is sampled every ``step`` (default ``0.05 kappa``),
    each sign change is refined with Brent's bracketing method until
    ``|G(a) - a| < tol``, and ``0`` is always included. A local minimum of
    ``|G - a|`` below ``1e-6`` without a sign change is reported as a suspected
    tangency. If the HJB solve fails mid-scan the scan stops there and
    ``failure_boundary`` records the first failing ``alpha``.
    """
    if not dist.symmetric:
        raise ValueError("find_fixed_points requires a distribution declared symmetric")
    grid = grid or TorusGrid()
    kappa = params.kappa
    alpha_max = kappa if alpha_max is None else min(float(alpha_max), kappa)
    if kappa == 0.0 or alpha_max <= 0.0:
        return FixedPointReport(kappa, [0.0], dF_origin(params, dist), [0.0],
                                [0.0] if slopes else [])
    step = 0.05 * kappa if step is None else float(step)
    n = max(int(math.ceil(alpha_max / step - 1e-9)), 1)
    alphas = np.linspace(0.0, alpha_max, n + 1)

    def resid(a):
        try:
            return G_kappa(params, dist, float(a), grid) - a
        except HJBConvergenceError:
            return math.nan

    values = np.array(list(mapper(resid, alphas)))
    failure = None
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        failure = float(alphas[bad[0]])
        alphas, values = alphas[:bad[0]], values[:bad[0]]

    def f(a):
        return G_kappa(params, dist, a, grid) - a

    points, residuals = [0.0], [0.0]
    slope0 = dF_origin(params, dist)[0, 0] - 1.0
    for i in range(1, len(alphas)):
        lo, hi = alphas[i - 1], alphas[i]
        flo, fhi = values[i - 1], values[i]
        if i == 1:
            # G(0) - 0 vanishes identically; use the slope there for the sign
            lo = 1e-3 * hi
            flo = f(lo) if slope0 != 0.0 else 0.0
            if flo == 0.0:
                continue
        if fhi == 0.0:
            points.append(float(hi))
            residuals.append(0.0)
        elif flo * fhi < 0:
            root = brentq(f, lo, hi, xtol=1e-13, rtol=1e-14, maxiter=200)
            points.append(float(root))
            residuals.append(abs(f(root)))
    tangency = []
    mag = np.abs(values)
    for i in range(1, len(values) - 1):
        if mag[i] < 1e-6 and mag[i] <= mag[i - 1] and mag[i] <= mag[i + 1] \
                and values[i - 1] * values[i + 1] > 0:
            tangency.append(float(alphas[i]))
    for a, r in zip(points, residuals):
        if r >= tol:
            raise RuntimeError(f"fixed point refinement stalled at alpha={a!r}, residual {r:.3e}")
    order = np.argsort(points)
    points = [points[i] for i in order]
    residuals = [residuals[i] for i in order]
    slope_list = [g_map_slope(params, dist, a, grid) for a in points] if slopes else []
    scan = list(zip(alphas.tolist(), (values + alphas).tolist()))
    return FixedPointReport(kappa, points, dF_origin(params, dist), residuals, slope_list,
                            tangency, scan, failure)


def newton_fixed_point(params: ModelParams, dist: FrequencyDistribution,
                       alpha0: OrderParameters, grid: TorusGrid | None = None,
                       tol: float = 1e-9, max_iter: int = 30, fd_step: float = 1e-5):
    """2-D Newton on ``F_kappa(alpha) - alpha`` with a finite-difference Jacobian.

    Rotation invariance makes nonzero roots non-isolated, so each step uses the
    minimum-norm least-squares solution. Returns ``(alpha, residual)``.
    """
    grid = grid or TorusGrid()
    x = np.array([alpha0.alpha1, alpha0.alpha2], dtype=float)

    def r(y):
        out = F_kappa(params, dist, OrderParameters(*y), grid)
        return np.array([out.alpha1, out.alpha2]) - y

    rx = r(x)
    for _ in range(max_iter):
        if np.max(np.abs(rx)) < tol:
            break
        jac = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = fd_step
            jac[:, j] = (r(x + e) - r(x - e)) / (2 * fd_step)
        dx = np.linalg.lstsq(jac, -rx, rcond=1e-8)[0]
        x = x + dx
        rx = r(x)
    return OrderParameters(*x), float(np.max(np.abs(rx)))
