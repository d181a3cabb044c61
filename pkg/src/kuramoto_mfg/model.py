"""Model parameters, intrinsic-frequency laws and the explicit coupling threshold.

Every integral against the frequency law ``g`` in the package goes through
:func:`integrate_g`, which reduces to a weighted sum over the nodes stored on a
:class:`FrequencyDistribution`:

* ``dirac``     exact weighted sum over the atoms,
* ``gaussian``  probabilists' Gauss-Hermite rule (64 nodes by default),
* ``uniform``   Gauss-Legendre rule on ``[-a, a]`` (64 nodes by default),
* ``table``     user supplied nodes and weights, treated as a Dirac mixture.

Rational integrands with poles near the real axis (the critical coupling, the
Penrose function) instead use :func:`mean_inverse`, which is exact for the
Gaussian (Faddeeva function) and uniform (complex logarithm) laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import wofz

__all__ = [
    "ModelParams",
    "FrequencyDistribution",
    "QuadratureError",
    "integrate_g",
    "fourier_g",
    "kappa_c",
    "kappa_c_integrand",
    "mean_inverse",
    "lorentz_average",
    "delta0",
    "two_dirac",
    "dist_from_dict",
]

_WEIGHT_TOL = 1e-12
_SYMMETRY_TOL = 1e-10


class QuadratureError(ValueError):
    """Raised when an integrand is not finite at a quadrature node."""

    def __init__(self, node: float, value):
        self.node = float(node)
        self.value = value
        super().__init__(f"integrand is not finite at omega={self.node!r} (value {value!r})")


@dataclass(frozen=True)
class ModelParams:
    """Scalar configuration ``(kappa, beta, sigma)`` of the game.

    ``gamma = beta + sigma**2 / 2`` is a property, so it can never go stale.
    """

    kappa: float
    beta: float
    sigma: float

    def __post_init__(self):
        for name in ("kappa", "beta", "sigma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta!r}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma!r}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa!r}")

    @property
    def gamma(self) -> float:
        return self.beta + 0.5 * self.sigma**2

    @property
    def half_var(self) -> float:
        """``sigma**2 / 2``, the diffusion coefficient of the state."""
        return 0.5 * self.sigma**2

    def with_kappa(self, kappa: float) -> "ModelParams":
        return ModelParams(kappa=kappa, beta=self.beta, sigma=self.sigma)

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "beta": self.beta, "sigma": self.sigma, "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class FrequencyDistribution:
    """Law ``g`` of the intrinsic frequencies.

    Use the classmethod constructors rather than the raw initializer. The
    ``symmetric`` flag is a declaration which is checked at construction time;
    it is never inferred from the nodes.
    """

    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    symmetric: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.shape != weights.shape or nodes.size == 0:
            raise ValueError("nodes and weights must be non-empty arrays of equal length")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise ValueError("nodes and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (sum={weights.sum()!r})")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.symmetric:
            self._validate_symmetry()

    # -- constructors -------------------------------------------------------

    @classmethod
    def dirac(cls, atoms, symmetric: bool = False) -> "FrequencyDistribution":
        """Mixture of point masses from ``[(omega_i, w_i), ...]``."""
        atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
        return cls("dirac", atoms[:, 0], atoms[:, 1], symmetric,
                   {"nodes": atoms.tolist()})

    @classmethod
    def gaussian(cls, mean: float = 0.0, variance: float = 1.0, n_nodes: int = 64,
                 symmetric: bool = True) -> "FrequencyDistribution":
        if variance <= 0:
            raise ValueError(f"variance must be > 0, got {variance!r}")
        x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
        w = w / w.sum()
        return cls("gaussian", mean + math.sqrt(variance) * x, w, symmetric,
                   {"mean": float(mean), "variance": float(variance), "n_nodes": n_nodes})

    @classmethod
    def uniform(cls, a: float, n_nodes: int = 64, symmetric: bool = True) -> "FrequencyDistribution":
        """Uniform law on ``[-a, a]``."""
        if a <= 0:
            raise ValueError(f"half-width a must be > 0, got {a!r}")
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        return cls("uniform", a * x, w / w.sum(), symmetric,
                   {"a": float(a), "n_nodes": n_nodes})

    @classmethod
    def table(cls, nodes, weights, symmetric: bool = False) -> "FrequencyDistribution":
        return cls("table", nodes, weights, symmetric)

    # -- derived quantities -------------------------------------------------

    def _validate_symmetry(self):
        scale = 1.0 + float(np.max(np.abs(self.nodes)))
        mean = float(self.weights @ self.nodes)
        if abs(mean) > _SYMMETRY_TOL * scale:
            raise ValueError(f"distribution declared symmetric but has mean {mean!r}")
        for t in (0.37, 1.0, 2.9, 7.3):
            s = float(self.weights @ np.sin(self.nodes * t))
            if abs(s) > _SYMMETRY_TOL * scale:
                raise ValueError(
                    f"distribution declared symmetric but int sin(omega*{t}) g = {s!r}")

    @property
    def mean(self) -> float:
        return float(self.weights @ self.nodes)

    @property
    def second_moment(self) -> float:
        return float(self.weights @ self.nodes**2)

    @property
    def is_two_dirac(self) -> bool:
        """True for ``(delta_{w0} + delta_{-w0}) / 2`` with ``w0 > 0``."""
        if self.kind not in ("dirac", "table") or self.nodes.size != 2:
            return False
        return (abs(self.nodes[0] + self.nodes[1]) <= 1e-14 * (1 + abs(self.nodes[0]))
                and abs(self.weights[0] - 0.5) <= 1e-14 and self.nodes[0] != 0.0)

    @property
    def omega0(self) -> float:
        if not self.is_two_dirac:
            raise ValueError("omega0 is only defined for a symmetric two-point law")
        return float(abs(self.nodes[0]))

    def reflected(self) -> "FrequencyDistribution":
        """Push-forward under ``omega -> -omega``."""
        params = dict(self.params)
        if "mean" in params:
            params["mean"] = -params["mean"]
        return FrequencyDistribution(self.kind, -self.nodes, self.weights, self.symmetric, params)

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "symmetric": self.symmetric}
        out.update(self.params)
        if self.kind == "table":
            out["nodes"] = self.nodes.tolist()
            out["weights"] = self.weights.tolist()
        return out

    def __repr__(self):
        return f"FrequencyDistribution(kind={self.kind!r}, n={self.nodes.size}, params={self.params!r})"


def delta0() -> FrequencyDistribution:
    """Point mass at zero frequency (the homogeneous population)."""
    return FrequencyDistribution.dirac([(0.0, 1.0)], symmetric=True)


def two_dirac(omega0: float) -> FrequencyDistribution:
    """``(delta_{omega0} + delta_{-omega0}) / 2``."""
    return FrequencyDistribution.dirac([(omega0, 0.5), (-omega0, 0.5)], symmetric=True)


def integrate_g(dist: FrequencyDistribution, f: Callable[[np.ndarray], np.ndarray]):
    """Integrate ``f(omega)`` against ``g``.

    ``f`` is called once with the full node array and may return real or
    complex values. Raises :class:`QuadratureError` naming the first node
    where ``f`` is not finite.
    """
    values = np.asarray(f(dist.nodes))
    if values.shape != dist.nodes.shape:
        values = np.broadcast_to(values, dist.nodes.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise QuadratureError(dist.nodes[i], values[i])
    return dist.weights @ values


def fourier_g(dist: FrequencyDistribution, t):
    """``int cos(omega t) g(d omega)`` for a symmetric law (vectorized in ``t``).

    Gaussian and uniform laws use their closed-form transforms; a fixed
    Gauss rule cannot resolve ``cos(omega t)`` once ``t`` is large.
    """
    if not dist.symmetric:
        raise ValueError("fourier_g requires a distribution declared symmetric")
    t = np.asarray(t, dtype=float)
    if dist.kind == "gaussian":
        return np.exp(-0.5 * dist.params["variance"] * t**2)
    if dist.kind == "uniform":
        return np.sinc(dist.params["a"] * t / np.pi)
    return np.cos(np.multiply.outer(t, dist.nodes)) @ dist.weights


def kappa_c_integrand(omega, params: ModelParams):
    """``(gamma sigma^2 + 2 w^2) / ((gamma^2 + w^2)(sigma^4 + 4 w^2))``."""
    g, s2 = params.gamma, params.sigma**2
    w2 = np.asarray(omega, dtype=float) ** 2
    return (g * s2 + 2.0 * w2) / ((g * g + w2) * (s2 * s2 + 4.0 * w2))


def mean_inverse(dist: "FrequencyDistribution", c, power: int = 1):
    """``E[(c + i w)^-power]`` for ``Re c > 0``, ``power`` in ``{1, 2}``.

    Gaussian and uniform laws use closed forms so that accuracy does not
    degrade near the edges of the strip; other laws use their nodes.
    """
    c = np.asarray(c, dtype=complex)
    if dist.kind == "gaussian":
        mu, sd = dist.params["mean"], math.sqrt(dist.params["variance"])
        u = 1j * (c + 1j * mu) / (sd * math.sqrt(2.0))
        w = wofz(u)
        if power == 1:
            return math.sqrt(math.pi / 2.0) * w / sd
        dw = -2.0 * u * w + 2j / math.sqrt(math.pi)
        return -math.sqrt(math.pi / 2.0) * dw * 1j / (sd * sd * math.sqrt(2.0))
    if dist.kind == "uniform":
        a = dist.params["a"]
        if power == 1:
            return (np.log(c + 1j * a) - np.log(c - 1j * a)) / (2j * a)
        return 1j * (1.0 / (c + 1j * a) - 1.0 / (c - 1j * a)) / (2.0 * a)
    return (c[..., None] + 1j * dist.nodes) ** (-power) @ dist.weights


def lorentz_average(dist: FrequencyDistribution, a: float, b: float) -> complex:
    """``E[(a b + w^2 + i (b - a) w) / ((a^2 + w^2)(b^2 + w^2))]`` for ``a, b > 0``.

    Uses ``(a b + w^2)/((a^2 + w^2)(b^2 + w^2)) = (a/(a^2+w^2) + b/(b^2+w^2)) / (a + b)``
    and ``1/(a + i w) = (a - i w)/(a^2 + w^2)``, so only :func:`mean_inverse` is needed.
    """
    ma, mb = mean_inverse(dist, a), mean_inverse(dist, b)
    return complex(ma.real + mb.real, mb.imag - ma.imag) / (a + b)


def kappa_c(dist: FrequencyDistribution, params: ModelParams) -> float:
    """Explicit critical coupling: reciprocal of the g-average of the integrand above.

    Gaussian and uniform laws use the closed form of :func:`lorentz_average`,
    since the integrand has poles at ``+-i sigma^2/2`` that a fixed Gauss rule
    resolves poorly when ``sigma`` is small.
    """
    if not dist.symmetric:
        raise ValueError("kappa_c requires a distribution declared symmetric")
    if dist.kind in ("gaussian", "uniform"):
        value = 0.5 * lorentz_average(dist, params.gamma, params.half_var).real
    else:
        value = float(integrate_g(dist, lambda w: kappa_c_integrand(w, params)))
    return 1.0 / value


def dist_from_dict(raw: dict) -> FrequencyDistribution:
    """Build a distribution from its JSON description.

    Accepted forms::

        {"kind": "dirac", "nodes": [[2.0, 0.5], [-2.0, 0.5]]}
        {"kind": "gaussian", "mean": 0, "variance": 1}
        {"kind": "uniform", "a": 1.0}
        {"kind": "table", "nodes": [...], "weights": [...]}

    An optional ``"symmetric"`` key (default ``true``) and ``"n_nodes"`` for the
    continuous kinds. Errors are :class:`KeyError`/:class:`ValueError` whose
    message names the offending field.
    """
    if not isinstance(raw, dict):
        raise ValueError("dist: expected a JSON object")
    if "kind" not in raw:
        raise KeyError("dist.kind")
    kind = raw["kind"]
    symmetric = bool(raw.get("symmetric", True))
    if kind == "dirac":
        if "nodes" not in raw:
            raise KeyError("dist.nodes")
        try:
            atoms = np.asarray(raw["nodes"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"dist.nodes: {exc}") from None
        if atoms.ndim != 2 or atoms.shape[1] != 2:
            raise ValueError("dist.nodes: expected a list of [omega, weight] pairs")
        return FrequencyDistribution.dirac(atoms, symmetric=symmetric)
    if kind == "gaussian":
        n = int(raw.get("n_nodes", 64))
        return FrequencyDistribution.gaussian(float(raw.get("mean", 0.0)),
                                              float(raw.get("variance", 1.0)), n, symmetric)
    if kind == "uniform":
        if "a" not in raw:
            raise KeyError("dist.a")
        return FrequencyDistribution.uniform(float(raw["a"]), int(raw.get("n_nodes", 64)),
                                             symmetric)
    if kind == "table":
        for key in ("nodes", "weights"):
            if key not in raw:
                raise KeyError(f"dist.{key}")
        return FrequencyDistribution.table(raw["nodes"], raw["weights"], symmetric)
    raise ValueError(f"dist.kind: unknown kind {kind!r}")
