"""Linearized stability operator around the g-uniform state.

For symmetric ``g`` the linearization of the equilibrium map is ``I - kappa L``
with

    (L k)(t) = 1/2 int_0^inf K(t, u) ghat(i (t - u)) k(u) du,
    K(t, u)  = int_0^{min(t, u)} e^{-(sigma^2/2)(t - s)} e^{-gamma (u - s)} ds,

acting on ``L^inf_lambda``, the functions with ``sup |k(t)| e^{lambda t} < inf``.
On a truncated uniform time grid ``L`` becomes a dense matrix (end-corrected
trapezoid rule in ``u``). For the two-point law the Laplace transform of the resolvent
equation reduces to a 2x2 linear system built from the roots of the quartic
``N`` (see :mod:`kuramoto_mfg.penrose`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

from .model import FrequencyDistribution, ModelParams, fourier_g, integrate_g, lorentz_average
from .penrose import N_quartic, Q, Q_prime, count_zeros

__all__ = [
    "TimeGrid",
    "WeightedSignal",
    "LaplaceSolution",
    "ResolventError",
    "kernel_K",
    "L_matrix",
    "apply_L",
    "apply_L_pair",
    "op_norm_L",
    "norm_bound_simple",
    "norm_exact",
    "solve_resolvent",
    "laplace_of_signal",
    "two_dirac_laplace_solve",
    "default_horizon",
    "reciprocal_condition",
]


class ResolventError(RuntimeError):
    """``I - kappa L`` is (numerically) not invertible, or a Laplace solve failed."""


def default_horizon(params: ModelParams) -> float:
    """``max(40 / sigma^2, 20 / beta)``."""
    return max(40.0 / params.sigma**2, 20.0 / params.beta)


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n: int = 2048

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon!r}")
        if self.n < 64:
            raise ValueError(f"need n >= 64 time nodes, got {self.n}")

    @classmethod
    def default(cls, params: ModelParams, n: int = 2048) -> "TimeGrid":
        return cls(default_horizon(params), n)

    @property
    def h(self) -> float:
        return self.horizon / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n)

    @property
    def weights(self) -> np.ndarray:
        """End-corrected (Gregory) weights over ``[0, T]``."""
        return self.h * _gregory(self.n - 1)

    def split_weights(self) -> np.ndarray:
        """Row ``i`` integrates over ``[0, t_i]`` and ``[t_i, T]`` separately.

        Kernels with a kink at ``u = t`` keep fourth-order accuracy this way.
        """
        n = self.n
        out = np.empty((n, n))
        for i in range(n):
            out[i, :i + 1] = _gregory(i)
            out[i, i:] = _gregory(n - 1 - i)
            out[i, i] = _gregory(i)[-1] + _gregory(n - 1 - i)[0]
        return self.h * out


_SMALL_RULES = {
    0: [0.0],
    1: [0.5, 0.5],
    2: [1 / 3, 4 / 3, 1 / 3],
    3: [3 / 8, 9 / 8, 9 / 8, 3 / 8],
    4: [14 / 45, 64 / 45, 24 / 45, 64 / 45, 14 / 45],
    5: [1 / 3, 4 / 3, 1 / 3 + 3 / 8, 9 / 8, 9 / 8, 3 / 8],
}
_GREGORY_END = np.array([3 / 8, 7 / 6, 23 / 24])


def _gregory(m: int) -> np.ndarray:
    """Unit-spacing weights for ``m`` intervals, fourth order for ``m >= 6``."""
    if m in _SMALL_RULES:
        return np.array(_SMALL_RULES[m])
    w = np.ones(m + 1)
    w[:3] = _GREGORY_END
    w[-3:] = _GREGORY_END[::-1]
    return w


@dataclass(frozen=True, eq=False)
class WeightedSignal:
    grid: TimeGrid
    values: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("signal values must be finite")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: TimeGrid, func, lam: float = 0.0) -> "WeightedSignal":
        return cls(grid, func(grid.nodes), lam)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def norm(self) -> float:
        """``sup_i |k(t_i)| e^{lambda t_i}``."""
        return float(np.max(np.abs(self.values) * np.exp(self.lam * self.t)))

    def __add__(self, other):
        return WeightedSignal(self.grid, self.values + other.values, self.lam)

    def __sub__(self, other):
        return WeightedSignal(self.grid, self.values - other.values, self.lam)


def kernel_K(params: ModelParams, t, u):
    """``K(t, u) = e^{-s t - gamma u} (e^{(s + gamma) min(t, u)} - 1) / (s + gamma)``, ``s = sigma^2/2``.

    Evaluated as ``exp(-s t - gamma u + r m) (-expm1(-r m)) / r`` with ``r = s + gamma``
    so nothing overflows for large times.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    s, g = params.half_var, params.gamma
    r = s + g
    m = np.minimum(t, u)
    return np.exp(-s * t - g * u + r * m) * (-np.expm1(-r * m)) / r


def _cos_transform(dist, tau):
    if dist.symmetric:
        return fourier_g(dist, tau)
    return np.cos(np.multiply.outer(tau, dist.nodes)) @ dist.weights


def _sin_transform(dist, tau):
    if dist.symmetric:
        return np.zeros_like(tau)
    return np.sin(np.multiply.outer(tau, dist.nodes)) @ dist.weights


def L_matrix(params: ModelParams, dist: FrequencyDistribution, grid: TimeGrid) -> np.ndarray:
    """Quadrature matrix ``M`` with ``(L k)(t_i) ~ sum_j M_ij k(u_j)``.

    Gregory weights split at the kink ``u = t_i`` of ``K``, truncated at the horizon.
    """
    if not dist.symmetric:
        raise ValueError("L is defined for symmetric g; use apply_L_pair otherwise")
    t = grid.nodes
    tau = t[:, None] - t[None, :]
    return 0.5 * kernel_K(params, t[:, None], t[None, :]) * fourier_g(dist, tau) * grid.split_weights()


def apply_L(params: ModelParams, dist: FrequencyDistribution, k: WeightedSignal,
            matrix: np.ndarray | None = None) -> WeightedSignal:
    """``L k`` on the grid of ``k`` (see :func:`L_matrix` for the quadrature)."""
    m = L_matrix(params, dist, k.grid) if matrix is None else matrix
    return WeightedSignal(k.grid, m @ k.values, k.lam)


def apply_L_pair(params: ModelParams, dist: FrequencyDistribution, h1: WeightedSignal,
                 h2: WeightedSignal, kappa: float = 1.0):
    """Coupled operators ``(L^1 h, L^2 h)`` for a possibly non-symmetric ``g``.

    With ``C(tau) = int cos(w tau) g`` and ``S(tau) = int sin(w tau) g``::

        L^1 h = kappa/2 int K(t, u) [h1(u) C(t-u) - h2(u) S(t-u)] du
        L^2 h = kappa/2 int K(t, u) [h1(u) S(t-u) + h2(u) C(t-u)] du

    i.e. ``L^1 + i L^2`` is the kernel ``K(t, u) int e^{i w (t-u)} g`` applied to
    ``h1 + i h2``, which commutes with phase rotations. For constant ``h`` the
    long-time limit reproduces :func:`~kuramoto_mfg.equilibrium.dF_origin`.
    For symmetric ``g`` this is ``(kappa L h1, kappa L h2)``.
    """
    grid = h1.grid
    t = grid.nodes
    tau = t[:, None] - t[None, :]
    base = 0.5 * kappa * kernel_K(params, t[:, None], t[None, :]) * grid.split_weights()
    c = base * _cos_transform(dist, tau)
    s = base * _sin_transform(dist, tau)
    out1 = c @ h1.values - s @ h2.values
    out2 = s @ h1.values + c @ h2.values
    return WeightedSignal(grid, out1, h1.lam), WeightedSignal(grid, out2, h2.lam)


def op_norm_L(params: ModelParams, dist: FrequencyDistribution, lam: float | None = None,
              grid: TimeGrid | None = None, matrix: np.ndarray | None = None) -> float:
    """Weighted sup-norm of the discretized ``L``: ``max_i sum_j |M_ij| e^{lambda (t_i - u_j)}``."""
    lam = 0.01 * params.sigma**2 if lam is None else float(lam)
    if not 0.0 < lam < params.half_var:
        raise ValueError(f"lambda must lie in (0, sigma^2/2), got {lam!r}")
    grid = grid or TimeGrid.default(params)
    m = L_matrix(params, dist, grid) if matrix is None else matrix
    t = grid.nodes
    weight = np.exp(lam * (t[:, None] - t[None, :]))
    return float(np.max(np.sum(np.abs(m) * weight, axis=1)))


def norm_bound_simple(params: ModelParams, lam: float) -> float:
    """Distribution-free envelope ``1 / ((gamma + lambda)(sigma^2 - 2 lambda))``."""
    return 1.0 / ((params.gamma + lam) * (params.sigma**2 - 2.0 * lam))


def norm_exact(params: ModelParams, dist: FrequencyDistribution, lam: float) -> float:
    """Closed-form weighted norm of ``L``::

        int ((s2 - 2l)(l + gamma) + 2 w^2) / (((s2 - 2l)^2 + 4 w^2)((l + gamma)^2 + w^2)) g(dw)

    At ``lambda = 0`` this is ``1 / kappa_c(g)``.
    """
    s2, g = params.sigma**2, params.gamma
    a, b = s2 - 2.0 * lam, lam + g

    def f(w):
        w2 = w * w
        return (a * b + 2.0 * w2) / ((a * a + 4.0 * w2) * (b * b + w2))

    if dist.kind in ("gaussian", "uniform"):
        return 0.5 * lorentz_average(dist, 0.5 * a, b).real
    return float(integrate_g(dist, f))


def reciprocal_condition(a: np.ndarray) -> float:
    """LAPACK 1-norm reciprocal condition estimate of a square matrix."""
    lu, piv = lu_factor(a, check_finite=False)
    rcond, info = lapack.dgecon(lu, np.linalg.norm(a, 1), norm="1")
    return float(rcond) if info == 0 else 0.0


def solve_resolvent(params: ModelParams, dist: FrequencyDistribution, kappa: float,
                    phi: WeightedSignal, mode: str = "auto", tol: float = 1e-10,
                    max_iter: int = 10_000, matrix: np.ndarray | None = None):
    """Solve ``k = phi + kappa L k`` on the grid of ``phi``.

    ``mode="auto"`` uses the Neumann series when the discrete weighted norm
    gives a contraction (``kappa ||L|| < 1``) and a dense LU solve otherwise.
    Returns ``(k, residual)`` with the weighted-norm residual of the discrete
    equation. Raises :class:`ResolventError` if the dense system is singular to
    working precision or the residual exceeds ``1e-8``.
    """
    grid, lam = phi.grid, phi.lam
    if kappa == 0.0:
        return WeightedSignal(grid, phi.values.copy(), lam), 0.0
    m = L_matrix(params, dist, grid) if matrix is None else matrix
    t = grid.nodes
    w = np.exp(lam * t)
    if mode not in ("auto", "neumann", "dense"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "auto":
        weight = np.exp(lam * (t[:, None] - t[None, :]))
        contraction = kappa * np.max(np.sum(np.abs(m) * weight, axis=1))
        mode = "neumann" if contraction < 1.0 else "dense"
    if mode == "neumann":
        k = phi.values.copy()
        for _ in range(max_iter):
            new = phi.values + kappa * (m @ k)
            delta = np.max(np.abs(new - k) * w)
            k = new
            if delta < tol:
                break
    else:
        a = np.eye(grid.n) - kappa * m
        with warnings.catch_warnings():
            # singularity is judged by rcond below
            warnings.simplefilter("ignore", LinAlgWarning)
            lu = lu_factor(a, check_finite=False)
        rcond, _ = lapack.dgecon(lu[0], np.linalg.norm(a, 1), norm="1")
        if rcond < 1e-12:
            raise ResolventError(f"I - kappa L is numerically singular at kappa={kappa!r} "
                                 f"(rcond {rcond:.2e})")
        k = lu_solve(lu, phi.values, check_finite=False)
    residual = float(np.max(np.abs(k - phi.values - kappa * (m @ k)) * w))
    if residual > 1e-8:
        raise ResolventError(f"resolvent residual {residual:.3e} exceeds 1e-8")
    return WeightedSignal(grid, k, lam), residual


def laplace_of_signal(k: WeightedSignal, z, tail_tol: float = 1e-8):
    """Laplace transform ``int_0^T e^{-z t} k(t) dt`` with the grid's Gregory weights.

    The neglected tail is bounded by ``e^{-(Re z + lambda) T} ||k|| / (Re z + lambda)``
    and must be below ``tail_tol``.
    """
    z = np.asarray(z, dtype=complex)
    grid = k.grid
    rate = np.real(z) + k.lam
    if np.any(rate <= 0):
        raise ValueError("need Re z > -lambda")
    tail = np.exp(-rate * grid.horizon) * k.norm() / rate
    if np.any(tail > tail_tol):
        raise ValueError(f"Laplace tail bound {np.max(tail):.3e} exceeds {tail_tol:g}; "
                         "increase the horizon")
    kern = np.exp(-np.multiply.outer(z, grid.nodes)) * grid.weights
    out = kern @ k.values
    return complex(out) if out.ndim == 0 else out


@dataclass
class LaplaceSolution:
    a: complex
    b: complex
    hhat: Callable
    case: str
    roots: np.ndarray
    determinant: complex


def _holo_derivative(f, z, h=1e-5):
    return (f(z + h) - f(z - h)) / (2 * h)


def two_dirac_laplace_solve(params: ModelParams, omega0: float, kappa: float,
                            phihat: Callable, lam: float | None = None,
                            phihat_prime: Callable | None = None,
                            check_penrose: bool = True) -> LaplaceSolution:
    """Laplace-domain solution of ``k = phi + kappa L k`` for ``g = (delta_w0 + delta_-w0)/2``.

    ``h(z) = phi(z) + kappa (Q(z, w0)(phi(z) - b) + Q(z, -w0)(phi(z) - a)) / N(z)``
    with ``a = h(gamma + i w0)``, ``b = h(gamma - i w0)``. The unknowns are fixed
    by requiring the numerator to vanish at the two rightmost roots of ``N``
    (with a derivative condition if they coincide), so ``h`` is holomorphic on
    ``Re z > -lambda`` when the Penrose condition holds there.
    """
    if omega0 <= 0:
        raise ValueError("omega0 must be > 0")
    lam = 0.01 * params.sigma**2 if lam is None else float(lam)
    if check_penrose:
        dist = FrequencyDistribution.dirac([(omega0, 0.5), (-omega0, 0.5)], symmetric=True)
        n_zeros = count_zeros(dist, params, kappa, strip=(-lam, params.beta + lam))
        if n_zeros != 0:
            raise ResolventError(f"Penrose condition fails: {n_zeros} zeros of 1 - kappa P/2 "
                                 f"in Re z in [{-lam}, {params.beta + lam}]")
    quart = N_quartic(params, omega0, kappa)
    poly = np.polynomial.polynomial

    def n_of(z):
        return poly.polyval(z, quart.coefficients)

    if kappa == 0.0:
        a, b = phihat(params.gamma + 1j * omega0), phihat(params.gamma - 1j * omega0)
        return LaplaceSolution(a, b, phihat, quart.case, quart.roots, 1.0)

    order = np.argsort(-quart.roots.real, kind="stable")
    r1, r2 = quart.roots[order[0]], quart.roots[order[1]]
    if quart.case == "double-real" or abs(r1 - r2) < 1e-7:
        x = 0.5 * (r1 + r2).real
        dphi = phihat_prime(x) if phihat_prime is not None else _holo_derivative(phihat, x)
        qp, qm = Q(x, omega0, params), Q(x, -omega0, params)
        dqp, dqm = Q_prime(x, omega0, params), Q_prime(x, -omega0, params)
        mat = np.array([[qm, qp], [dqm, dqp]], dtype=complex)
        rhs = np.array([(qp + qm) * phihat(x), (dqp + dqm) * phihat(x) + (qp + qm) * dphi])
    else:
        rows, rhs = [], []
        for r in (r1, r2):
            qp, qm = Q(r, omega0, params), Q(r, -omega0, params)
            rows.append([qm, qp])
            rhs.append((qp + qm) * phihat(r))
        mat = np.array(rows, dtype=complex)
        rhs = np.array(rhs, dtype=complex)
    det = np.linalg.det(mat)
    if abs(det) < 1e-12:
        raise ResolventError(f"two-Dirac Laplace system is singular (|det| = {abs(det):.3e})")
    a, b = np.linalg.solve(mat, rhs)

    def hhat(z):
        z = np.asarray(z, dtype=complex)
        ph = phihat(z)
        num = Q(z, omega0, params) * (ph - b) + Q(z, -omega0, params) * (ph - a)
        out = ph + kappa * num / n_of(z)
        return complex(out) if out.ndim == 0 else out

    return LaplaceSolution(complex(a), complex(b), hhat, quart.case, quart.roots, complex(det))
