"""Time-dependent game on a finite horizon: coupled HJB and Fokker-Planck sweeps.

Given an order-parameter path ``h(t) = (h1, h2)`` every frequency node solves

    -d_t v = omega v_x + (sigma^2/2) v_xx + kappa - h1 cos x - h2 sin x - v_x^2/2 - beta v

backward from a terminal value, then its density is pushed forward by

    d_t mu = (sigma^2/2) mu_xx - d_x((omega - v_x) mu).

The path is updated by damped Picard iteration until it reproduces itself.
The HJB step is Fourier spectral, implicit in the linear part and explicit in
the quadratic term. The Fokker-Planck step is implicit finite volume with
Scharfetter-Gummel fluxes, which conserves mass exactly and keeps densities
nonnegative for any time step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .hjb import OrderParameters, TorusField, TorusGrid, solve_stationary_hjb
from .model import FrequencyDistribution, ModelParams

__all__ = [
    "PicardStagnationError",
    "MfgTrajectory",
    "DecayFit",
    "gm_distance",
    "gm_series",
    "evolve_mfg",
    "fit_decay_rate",
    "fit_decay_series",
    "potential_phi",
    "order_parameters",
    "write_trajectory_csv",
]


class PicardStagnationError(RuntimeError):
    """The Picard loop did not reach its tolerance."""

    def __init__(self, message, residuals):
        self.residuals = list(residuals)
        super().__init__(message)


def gm_distance(density) -> float:
    """Largest of ``|int cos|, |int cos 2x|, |int sin|, |int sin 2x|`` against ``density``."""
    if isinstance(density, TorusField):
        grid, values = density.grid, density.values
    else:
        values = np.asarray(density, dtype=float)
        grid = TorusGrid(values.shape[-1])
    return float(np.max(gm_series(grid, values)))


def gm_series(grid: TorusGrid, values) -> np.ndarray:
    """``gm_distance`` along the leading axes of an array of densities."""
    f = grid.h * np.fft.rfft(np.asarray(values, dtype=float), axis=-1)[..., 1:3]
    # int cos(kx) mu = Re f_k, int sin(kx) mu = -Im f_k
    return np.maximum(np.max(np.abs(f.real), axis=-1), np.max(np.abs(f.imag), axis=-1))


def order_parameters(kappa: float, dist: FrequencyDistribution, grid: TorusGrid, densities):
    """``kappa (int int cos dmu, int int sin dmu)`` for node densities of shape ``(nodes, ..., n)``."""
    f1 = grid.h * np.fft.rfft(np.asarray(densities, dtype=float), axis=-1)[..., 1]
    c, s = f1.real, -f1.imag
    return kappa * np.tensordot(dist.weights, c, axes=1), kappa * np.tensordot(dist.weights, s, axes=1)


def potential_phi(densities, dist: FrequencyDistribution, grid: TorusGrid | None = None) -> float:
    """``Phi = 1/2 - (C^2 + S^2)/2`` with ``C, S`` the g-averaged first harmonics.

    ``densities`` holds one density per frequency node (TorusFields or arrays).
    """
    if grid is None:
        first = densities[0]
        grid = first.grid if isinstance(first, TorusField) else TorusGrid(len(first))
    vals = np.array([d.values if isinstance(d, TorusField) else d for d in densities])
    c, s = order_parameters(1.0, dist, grid, vals)
    return float(0.5 - 0.5 * (c * c + s * s))


def _bernoulli(w):
    # B(w) = w / (e^w - 1), B(0) = 1
    w = np.asarray(w, dtype=float)
    out = np.ones_like(w)
    nz = np.abs(w) > 1e-10
    out[nz] = w[nz] / np.expm1(w[nz])
    return out


def _cyclic_solve(lower, diag, upper, r):
    """Solve a cyclic tridiagonal system by Sherman-Morrison.

    Row ``j`` reads ``lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1] = r[j]``
    with indices taken modulo ``n``.
    """
    n = diag.size
    gam = -diag[0]
    ab = np.empty((3, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[1, 0] -= gam
    ab[1, -1] -= upper[-1] * lower[0] / gam
    ab[2, :-1] = lower[1:]
    ab[2, -1] = 0.0
    rhs = np.zeros((n, 2))
    rhs[:, 0] = r
    rhs[0, 1], rhs[-1, 1] = gam, upper[-1]
    sol = solve_banded((1, 1), ab, rhs, check_finite=False)
    y, z = sol[:, 0], sol[:, 1]
    vn = lower[0] / gam
    fac = (y[0] + vn * y[-1]) / (1.0 + z[0] + vn * z[-1])
    return y - fac * z


def _face_derivative(grid: TorusGrid, v):
    """``v_x`` at ``x_j + h/2`` by spectral interpolation (last axis)."""
    k = grid.wavenumbers.copy()
    k[grid.n // 2] = 0.0
    vh = np.fft.fft(v, axis=-1)
    return np.fft.ifft(1j * k * np.exp(0.5j * k * grid.h) * vh, axis=-1).real


def _backward_hjb(params, omega, grid, times, h1, h2, v_terminal):
    dt = times[1] - times[0]
    k = grid.wavenumbers
    x = grid.points
    cos_x, sin_x = np.cos(x), np.sin(x)
    denom = 1.0 / dt - 1j * omega * k + params.half_var * k * k + params.beta
    ik = 1j * k
    ik[grid.n // 2] = 0.0
    coef = np.empty((times.size, grid.n), dtype=complex)
    vh = np.fft.fft(v_terminal)
    coef[-1] = vh
    for m in range(times.size - 2, -1, -1):
        vx = np.fft.ifft(ik * vh).real
        src = params.kappa - h1[m] * cos_x - h2[m] * sin_x - 0.5 * vx * vx
        vh = (vh / dt + np.fft.fft(src)) / denom
        coef[m] = vh
    return np.fft.ifft(coef, axis=-1).real


def _forward_kfp(params, omega, grid, times, values_v, mu0):
    """Implicit Euler with Scharfetter-Gummel fluxes.

    The flux through face ``j+1/2`` is ``(D/h)(B(-w) mu_j - B(w) mu_{j+1})`` with
    ``w = b h / D`` and ``B(w) = w/(e^w - 1)``; the matrix is an M-matrix with
    zero column sums, so mass and positivity are preserved.
    """
    dt = times[1] - times[0]
    diff, h = params.half_var, grid.h
    drift = omega - _face_derivative(grid, values_v[1:])
    w = drift * h / diff
    bp, bm = _bernoulli(w), _bernoulli(-w)
    c = dt * diff / (h * h)
    diag = 1.0 + c * (bm + np.roll(bp, 1, axis=-1))
    upper = -c * bp
    lower = -c * np.roll(bm, 1, axis=-1)
    out = np.empty((times.size, grid.n))
    mu = mu0.copy()
    out[0] = mu
    for m in range(1, times.size):
        mu = _cyclic_solve(lower[m - 1], diag[m - 1], upper[m - 1], mu)
        out[m] = mu
    return out


@dataclass
class MfgTrajectory:
    params: ModelParams
    dist: FrequencyDistribution
    grid: TorusGrid
    times: np.ndarray
    densities: np.ndarray  # (nodes, times, n)
    order: np.ndarray      # (times, 2): h1, h2
    picard_residuals: list = field(default_factory=list)

    @property
    def gm(self) -> np.ndarray:
        """``gm_distance`` per node and time, shape ``(nodes, times)``."""
        return gm_series(self.grid, self.densities)

    @property
    def gm_max(self) -> np.ndarray:
        return np.max(self.gm, axis=0)

    @property
    def phi(self) -> np.ndarray:
        c, s = order_parameters(1.0, self.dist, self.grid, self.densities)
        return 0.5 - 0.5 * (c * c + s * s)

    @property
    def mass_error(self) -> float:
        mass = self.grid.h * self.densities.sum(axis=-1)
        return float(np.max(np.abs(mass - 1.0)))

    def density(self, node: int, step: int) -> TorusField:
        return TorusField(self.grid, self.densities[node, step])


def _as_density_array(initial, dist, grid):
    if callable(initial):
        arr = np.array([initial(grid.points, w) for w in dist.nodes], dtype=float)
    else:
        arr = np.array([d.values if isinstance(d, TorusField) else d for d in initial], dtype=float)
        if arr.ndim == 1:
            arr = np.tile(arr, (dist.nodes.size, 1))
    if arr.shape != (dist.nodes.size, grid.n):
        raise ValueError(f"initial densities must have shape {(dist.nodes.size, grid.n)}, "
                         f"got {arr.shape}")
    if np.any(arr < 0):
        raise ValueError("initial densities must be nonnegative")
    mass = grid.h * arr.sum(axis=1)
    if np.max(np.abs(mass - 1.0)) > 1e-10:
        raise ValueError(f"initial densities must have unit mass (got {mass})")
    return arr


def evolve_mfg(params: ModelParams, dist: FrequencyDistribution, initial,
               horizon: float | None = None, steps: int = 2000, damping: float = 0.5,
               grid: TorusGrid | None = None, tol: float = 1e-7, max_sweeps: int = 200,
               terminal: str = "uniform", h_guess=None, mapper=map) -> MfgTrajectory:
    """Damped Picard iteration for the finite-horizon game.

    Parameters
    ----------
    initial
        One density per frequency node (arrays or TorusFields), a single
        density used for every node, or a callable ``f(x, omega)``.
    horizon
        Defaults to ``20 / beta``.
    terminal
        ``"uniform"`` uses ``v(T) = kappa / beta``; ``"stationary"`` uses the
        stationary value function for the order parameters ``h(T)`` of the
        current iterate, which removes the terminal boundary layer when the
        path is an equilibrium.
    h_guess
        Initial path of shape ``(steps + 1, 2)`` or a constant pair. Defaults to
        the order parameters of ``initial``.

    Raises :class:`PicardStagnationError` if ``sup_t |Delta h| >= tol`` after
    ``max_sweeps`` sweeps, or if a density goes negative beyond ``1e-10``.
    """
    if terminal not in ("uniform", "stationary"):
        raise ValueError(f"terminal must be 'uniform' or 'stationary', got {terminal!r}")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    grid = grid or TorusGrid(128)
    horizon = 20.0 / params.beta if horizon is None else float(horizon)
    times = np.linspace(0.0, horizon, steps + 1)
    mu0 = _as_density_array(initial, dist, grid)
    if h_guess is None:
        c, s = order_parameters(params.kappa, dist, grid, mu0)
        path = np.tile([c, s], (times.size, 1))
    else:
        path = np.array(h_guess, dtype=float)
        if path.shape == (2,):
            path = np.tile(path, (times.size, 1))
        if path.shape != (times.size, 2):
            raise ValueError(f"h_guess must have shape {(times.size, 2)}")
    nodes = [float(w) for w in dist.nodes]
    residuals = []

    def sweep(args):
        i, omega, h1, h2 = args
        if terminal == "uniform":
            vt = np.full(grid.n, params.kappa / params.beta)
        else:
            vt = solve_stationary_hjb(params, omega, OrderParameters(h1[-1], h2[-1]),
                                      grid).values
        vals = _backward_hjb(params, omega, grid, times, h1, h2, vt)
        return _forward_kfp(params, omega, grid, times, vals, mu0[i])

    densities = None
    for _ in range(max_sweeps):
        h1, h2 = path[:, 0].copy(), path[:, 1].copy()
        densities = np.array(list(mapper(sweep, [(i, w, h1, h2) for i, w in enumerate(nodes)])))
        if np.min(densities) < -1e-10:
            raise PicardStagnationError(
                f"negative density {np.min(densities):.3e} during the sweep", residuals)
        c, s = order_parameters(params.kappa, dist, grid, densities)
        new = np.column_stack([c, s])
        res = float(np.max(np.abs(new - path)))
        residuals.append(res)
        if res < tol:
            path = new
            break
        path = (1.0 - damping) * path + damping * new
    else:
        raise PicardStagnationError(
            f"Picard iteration stalled: residual {residuals[-1]:.3e} after {max_sweeps} sweeps",
            residuals)
    return MfgTrajectory(params, dist, grid, times, densities, path, residuals)


@dataclass(frozen=True)
class DecayFit:
    lambda_fit: float
    c_fit: float
    r_squared: float
    n_points: int

    def as_dict(self) -> dict:
        return {"lambda_fit": self.lambda_fit, "c_fit": self.c_fit,
                "r_squared": self.r_squared, "n_points": self.n_points}


def fit_decay_series(times, values, min_points: int = 8) -> DecayFit:
    """Least-squares fit of ``log values ~ log c - lambda t`` over the second half of ``times``.

    Only samples with ``values > 1e-12`` enter the fit.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    half = times >= times[0] + 0.5 * (times[-1] - times[0])
    use = half & (values > 1e-12)
    n = int(np.count_nonzero(use))
    if n < min_points:
        raise ValueError(f"only {n} usable points for the decay fit (need {min_points})")
    t, y = times[use], np.log(values[use])
    slope, intercept = np.polyfit(t, y, 1)
    fitted = intercept + slope * t
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), float(math.exp(intercept)), r2, n)


def fit_decay_rate(traj: MfgTrajectory, min_points: int = 8) -> DecayFit:
    """Exponential envelope of ``max_omega gm(mu^omega_t)``; every node counts."""
    return fit_decay_series(traj.times, traj.gm_max, min_points)


def write_trajectory_csv(traj: MfgTrajectory, path, every: int = 1):
    """Columns ``t, h1, h2, gm_max, phi``."""
    gm, phi = traj.gm_max, traj.phi
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "h1", "h2", "gm_max", "phi"])
        for m in range(0, traj.times.size, every):
            writer.writerow([_fmt(traj.times[m]), _fmt(traj.order[m, 0]), _fmt(traj.order[m, 1]),
                             _fmt(gm[m]), _fmt(phi[m])])


def _fmt(x) -> str:
    return format(float(x), ".12g")
