"""Stationary per-frequency HJB on the torus and the induced invariant law.

For order parameters ``alpha = (a1, a2)`` a player with intrinsic frequency
``omega`` solves

    omega v' + (sigma^2/2) v'' + kappa - a1 cos x - a2 sin x - (v')^2 / 2 = beta v

and, following the feedback ``-v'``, settles into the invariant density of
``dX = (omega - v'(X)) dt + sigma dB`` on the circle.

Fields live on a uniform periodic grid and derivatives are Fourier spectral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams

__all__ = [
    "TorusGrid",
    "TorusField",
    "OrderParameters",
    "HJBConvergenceError",
    "solve_stationary_hjb",
    "xi_log",
    "invariant_measure",
    "fp_residual",
    "hjb_residual",
    "linearized_value",
    "linearized_density",
]

TWO_PI = 2.0 * math.pi


class HJBConvergenceError(RuntimeError):
    """Newton failed; ``alpha`` is probably outside the solvable range."""

    def __init__(self, message, residual, omega=None):
        self.residual = residual
        self.omega = omega
        super().__init__(message)


@dataclass(frozen=True)
class TorusGrid:
    n: int = 256

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {self.n}")

    @property
    def h(self) -> float:
        return TWO_PI / self.n

    @property
    def points(self) -> np.ndarray:
        return self.h * np.arange(self.n)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    def deriv(self, values, order: int = 1):
        """Spectral derivative of periodic grid values (last axis)."""
        k = self.wavenumbers
        vh = np.fft.fft(values, axis=-1)
        if order % 2:
            k = k.copy()
            k[self.n // 2] = 0.0
        out = np.fft.ifft((1j * k) ** order * vh, axis=-1)
        return out.real if np.isrealobj(values) else out

    def integrate(self, values):
        """Periodic trapezoid rule over one period (last axis)."""
        return self.h * np.sum(values, axis=-1)

    def diff_matrices(self):
        """Dense first and second spectral differentiation matrices."""
        # deriv acts on the last axis, so differentiating the identity gives D^T
        eye = np.eye(self.n)
        return self.deriv(eye, 1).T.copy(), self.deriv(eye, 2).T.copy()


@dataclass(frozen=True, eq=False)
class TorusField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("TorusField values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    def deriv(self, order: int = 1) -> np.ndarray:
        return self.grid.deriv(self.values, order)

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def moment(self, func) -> float:
        return float(self.grid.integrate(func(self.x) * self.values))

    def reflected(self) -> "TorusField":
        """``x -> -x`` on the grid."""
        return TorusField(self.grid, np.roll(self.values[::-1], 1))

    def shifted(self, steps: int) -> "TorusField":
        """Values of ``f(x - steps*h)``."""
        return TorusField(self.grid, np.roll(self.values, steps))


@dataclass(frozen=True)
class OrderParameters:
    """``alpha1 = kappa int cos dmu``, ``alpha2 = kappa int sin dmu``."""

    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha1) and math.isfinite(self.alpha2)):
            raise ValueError("order parameters must be finite")

    @classmethod
    def polar(cls, radius: float, phase: float) -> "OrderParameters":
        return cls(radius * math.cos(phase), radius * math.sin(phase))

    def cost(self, kappa: float, x):
        """``kappa c(x, alpha) = kappa - a1 cos x - a2 sin x``."""
        return kappa - self.alpha1 * np.cos(x) - self.alpha2 * np.sin(x)

    def __iter__(self):
        yield self.alpha1
        yield self.alpha2


def _hjb_residual(params, omega, cost, v, grid):
    vx = grid.deriv(v, 1)
    vxx = grid.deriv(v, 2)
    return omega * vx + params.half_var * vxx + cost - 0.5 * vx * vx - params.beta * v


def solve_stationary_hjb(params: ModelParams, omega: float, alpha: OrderParameters,
                         grid: TorusGrid | None = None, tol: float = 1e-10,
                         max_iter: int = 50, v0=None) -> TorusField:
    """Damped Newton on the spectral collocation of the stationary HJB.

    Starts from ``v = kappa/beta`` (or ``v0``). A step is halved until the max
    residual decreases. Converges when the max-norm residual is below ``tol``,
    or when it stagnates at round-off level below ``10 * tol``.
    """
    grid = grid or TorusGrid()
    x = grid.points
    cost = alpha.cost(params.kappa, x)
    if v0 is None:
        v = np.full(grid.n, params.kappa / params.beta)
    else:
        v = np.array(v0.values if isinstance(v0, TorusField) else v0, dtype=float)
    res = _hjb_residual(params, omega, cost, v, grid)
    rnorm = np.max(np.abs(res))
    if rnorm < tol:
        return TorusField(grid, v)
    d1, d2 = grid.diff_matrices()
    lin = omega * d1 + params.half_var * d2 - params.beta * np.eye(grid.n)
    for _ in range(max_iter):
        jac = lin - grid.deriv(v, 1)[:, None] * d1
        step = np.linalg.solve(jac, -res)
        t = 1.0
        while True:
            trial = v + t * step
            trial_res = _hjb_residual(params, omega, cost, trial, grid)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < rnorm or t < 1e-4:
                break
            t *= 0.5
        if trial_norm >= rnorm and rnorm < 10 * tol:
            return TorusField(grid, v)
        v, res, rnorm = trial, trial_res, trial_norm
        if rnorm < tol:
            return TorusField(grid, v)
    raise HJBConvergenceError(
        f"stationary HJB Newton did not converge for omega={omega!r}, alpha={tuple(alpha)!r}: "
        f"residual {rnorm:.3e}", residual=float(rnorm), omega=omega)


def hjb_residual(params: ModelParams, omega: float, alpha: OrderParameters,
                 v: TorusField) -> float:
    """Max-norm collocation residual of the stationary HJB."""
    cost = alpha.cost(params.kappa, v.x)
    return float(np.max(np.abs(_hjb_residual(params, omega, cost, v.values, v.grid))))


def xi_log(params: ModelParams, omega: float, v: TorusField) -> TorusField:
    """``log xi(x) = -(2/sigma^2) (omega x - v(x))`` on ``[0, 2 pi)``."""
    return TorusField(v.grid, -(omega * v.x - v.values) / params.half_var)


def _drift_weights(lam: float, k: np.ndarray) -> np.ndarray:
    # Fourier multiplier of p -> int_0^{2pi} e^{-lam s} p(x+s) ds, up to a positive constant
    if lam == 0.0:
        out = np.zeros(k.shape, dtype=complex)
        out[k == 0] = TWO_PI
        return out
    out = -np.expm1(-TWO_PI * abs(lam)) / (lam - 1j * k)
    nyq = k.size // 2
    out[nyq] = out[nyq].real
    return out


def invariant_measure(params: ModelParams, omega: float, v: TorusField) -> TorusField:
    """Invariant density of ``dX = (omega - v'(X)) dt + sigma dB`` on the circle.

    The closed form

        nu(x) ~ xi(x)^{-1} [ int_0^{2pi} xi + (e^{-4 pi omega/sigma^2} - 1) int_0^x xi ]

    is rewritten as ``e^{-2v(x)/sigma^2} int_0^{2pi} e^{-lam s} e^{2v(x+s)/sigma^2} ds``
    with ``lam = 2 omega / sigma^2``. The inner integral of the periodic factor is
    evaluated exactly on its trigonometric interpolant, so the result is
    spectrally accurate and free of the overflow in ``e^{lam x}``.
    """
    grid = v.grid
    two_over = 1.0 / params.half_var
    vv = v.values * two_over
    p = np.exp(vv - vv.max())
    lam = omega * two_over
    conv = np.fft.ifft(np.fft.fft(p) * _drift_weights(lam, grid.wavenumbers)).real
    dens = np.exp(-(vv - vv.min())) * conv
    dens = dens / grid.integrate(dens)
    if np.min(dens) < -1e-9 * np.max(dens):
        raise ValueError(f"invariant density has negative values (min {np.min(dens):.3e}); "
                         "the value function is inconsistent or under-resolved")
    return TorusField(grid, np.maximum(dens, 0.0))


def fp_residual(params: ModelParams, omega: float, v: TorusField, nu: TorusField) -> float:
    """Max-norm of ``d/dx((omega - v') nu) - (sigma^2/2) nu''``."""
    grid = v.grid
    flux = (omega - v.deriv(1)) * nu.values
    res = grid.deriv(flux, 1) - params.half_var * nu.deriv(2)
    return float(np.max(np.abs(res)))


def linearized_value(params: ModelParams, omega: float, alpha: OrderParameters):
    """Coefficients ``(A, B)`` of ``v - kappa/beta ~ A cos x + B sin x`` for small alpha."""
    g = params.gamma
    a1, a2 = alpha
    den = g * g + omega * omega
    return -(a1 * g + a2 * omega) / den, (a1 * omega - a2 * g) / den


def linearized_density(params: ModelParams, omega: float, alpha: OrderParameters,
                       grid: TorusGrid) -> TorusField:
    """First-order expansion of the invariant density around ``1/(2 pi)``.

    Equivalent to ``lam/((1+lam^2) omega) [(B lam - A) cos - (B + lam A) sin]`` with
    ``lam = 2 omega/sigma^2``, written so that ``omega = 0`` needs no special case.
    """
    a, b = linearized_value(params, omega, alpha)
    s = params.half_var
    den = s * s + omega * omega
    c_cos = (omega * b - s * a) / den
    c_sin = -(s * b + omega * a) / den
    x = grid.points
    return TorusField(grid, (1.0 + c_cos * np.cos(x) + c_sin * np.sin(x)) / TWO_PI)
