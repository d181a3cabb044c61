import math

import numpy as np
import pytest
from scipy import integrate

from kuramoto_mfg.hjb import (HJBConvergenceError, OrderParameters, TorusField, TorusGrid,
                              fp_residual, hjb_residual, invariant_measure, linearized_density,
                              linearized_value, solve_stationary_hjb, xi_log)
from kuramoto_mfg.model import ModelParams

P = ModelParams(kappa=2.0, beta=1.0, sigma=1.0)


def trig_interp(field: TorusField):
    """Evaluate the trigonometric interpolant of grid values anywhere."""
    n = field.grid.n
    c = np.fft.fft(field.values) / n
    k = field.grid.wavenumbers
    c = c.copy()
    c[n // 2] *= 0.5
    k_full = np.concatenate([k, [n // 2]])
    c_full = np.concatenate([c, [c[n // 2]]])
    k_full[n // 2] = -n // 2

    def f(x):
        return float(np.real(np.sum(c_full * np.exp(1j * k_full * x))))

    return f


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(100)
    with pytest.raises(ValueError):
        TorusGrid(8)
    g = TorusGrid(64)
    assert g.h == 2 * math.pi / 64


def test_diff_matrices_match_fft():
    g = TorusGrid(32)
    d1, d2 = g.diff_matrices()
    x = g.points
    f = np.exp(np.sin(x))
    np.testing.assert_allclose(d1 @ f, g.deriv(f, 1), atol=1e-12)
    np.testing.assert_allclose(d2 @ f, g.deriv(f, 2), atol=1e-11)
    np.testing.assert_allclose(d1 @ np.sin(x), np.cos(x), atol=1e-13)


def test_zero_alpha_gives_constant():
    v = solve_stationary_hjb(P, 1.7, OrderParameters(0.0, 0.0))
    assert np.all(v.values == P.kappa / P.beta)


@pytest.mark.parametrize("omega", [0.0, 2.0, -2.0, 15.0])
@pytest.mark.parametrize("alpha", [(0.5, 0.3), (9.0, 0.0), (3.0, -4.0)])
def test_residuals(omega, alpha):
    params = ModelParams(9.0, 1.0, 1.0)
    a = OrderParameters(*alpha)
    v = solve_stationary_hjb(params, omega, a)
    assert hjb_residual(params, omega, a, v) < 1e-9
    nu = invariant_measure(params, omega, v)
    assert fp_residual(params, omega, v, nu) < 1e-6
    assert abs(nu.integral() - 1.0) < 1e-12
    assert np.all(nu.values >= 0)


def test_residual_does_not_grow_with_grid():
    a = OrderParameters(0.8, 0.2)
    r = [hjb_residual(P, 1.0, a, solve_stationary_hjb(P, 1.0, a, TorusGrid(n))) for n in (128, 256)]
    assert r[1] <= 2 * max(r[0], 1e-10)


def test_divergence_is_reported():
    params = ModelParams(9.0, 1.0, 1.0)
    with pytest.raises(HJBConvergenceError) as info:
        solve_stationary_hjb(params, 0.0, OrderParameters(5000.0, 0.0), TorusGrid(32), max_iter=5)
    assert info.value.residual > 0


def test_reflection_symmetry():
    a = OrderParameters(0.7, 0.0)
    for omega in (0.5, 2.0):
        vp = solve_stationary_hjb(P, omega, a)
        vm = solve_stationary_hjb(P, -omega, a)
        np.testing.assert_allclose(vp.reflected().values, vm.values, atol=1e-9)
        nup = invariant_measure(P, omega, vp)
        num = invariant_measure(P, -omega, vm)
        np.testing.assert_allclose(nup.reflected().values, num.values, atol=1e-8)


def test_rotation_covariance():
    g = TorusGrid(256)
    r, theta = 0.6, 0.4
    steps = 16
    delta = steps * g.h
    base = OrderParameters.polar(r, theta)
    rot = OrderParameters.polar(r, theta + delta)
    omega = 1.3
    nu0 = invariant_measure(P, omega, solve_stationary_hjb(P, omega, base, g))
    nu1 = invariant_measure(P, omega, solve_stationary_hjb(P, omega, rot, g))
    np.testing.assert_allclose(nu1.values, nu0.shifted(steps).values, atol=1e-8)


def test_linearized_value_error_is_quadratic():
    omega = 2.0
    errs = []
    for a1 in (1e-3, 5e-4):
        a = OrderParameters(a1, 0.0)
        v = solve_stationary_hjb(P, omega, a)
        A, B = linearized_value(P, omega, a)
        x = v.x
        assert A == pytest.approx(-a1 * P.gamma / (P.gamma**2 + omega**2))
        assert B == pytest.approx(a1 * omega / (P.gamma**2 + omega**2))
        errs.append(np.max(np.abs(v.values - P.kappa / P.beta - A * np.cos(x) - B * np.sin(x))))
    assert errs[0] / errs[1] > 3.5


def test_linearized_density_error_is_quadratic():
    for omega in (0.0, 1.5):
        errs = []
        for a1 in (1e-3, 5e-4):
            a = OrderParameters(a1, 0.3 * a1)
            nu = invariant_measure(P, omega, solve_stationary_hjb(P, omega, a))
            lin = linearized_density(P, omega, a, nu.grid)
            errs.append(np.max(np.abs(nu.values - lin.values)))
        assert errs[0] / errs[1] > 3.5


def test_linearized_density_matches_lambda_form():
    omega = 1.5
    a = OrderParameters(0.01, 0.02)
    A, B = linearized_value(P, omega, a)
    lam = 2 * omega / P.sigma**2
    g = TorusGrid(64)
    pref = lam / ((1 + lam**2) * omega)
    ref = 1 + pref * ((B * lam - A) * np.cos(g.points) - (B + lam * A) * np.sin(g.points))
    np.testing.assert_allclose(linearized_density(P, omega, a, g).values * 2 * np.pi,
                               ref, atol=1e-14)


@pytest.mark.parametrize("omega", [0.0, 0.4, -3.0])
def test_linearized_density_solves_linear_fp(omega):
    # s f'' - omega f' + v'' = 0 with s = sigma^2/2 and nu = (1 + f)/2pi
    g = TorusGrid(64)
    a = OrderParameters(0.3, -0.2)
    A, B = linearized_value(P, omega, a)
    v = A * np.cos(g.points) + B * np.sin(g.points)
    f = linearized_density(P, omega, a, g).values * 2 * np.pi - 1
    res = P.sigma**2 / 2 * g.deriv(f, 2) - omega * g.deriv(f, 1) + g.deriv(v, 2)
    assert np.max(np.abs(res)) < 1e-13


def test_xi_log():
    g = TorusGrid(64)
    v = TorusField(g, np.full(64, 3.0))
    out = xi_log(ModelParams(3.0, 1.0, 1.0), 0.0, v)
    np.testing.assert_allclose(out.values, 2 * 3.0)
    p = ModelParams(0.0, 1.0, 1.0)
    zero = TorusField(g, np.zeros(64))
    assert xi_log(p, 1.0, zero).values[32] == pytest.approx(-2 * math.pi)
    w = TorusField(g, np.cos(g.points))
    assert xi_log(P, 4.0, w).values[0] == pytest.approx(2 / P.sigma**2 * 1.0)


def test_invariant_measure_uniform_and_gibbs():
    g = TorusGrid(128)
    const = TorusField(g, np.full(128, 5.0))
    for omega in (0.0, 3.0):
        nu = invariant_measure(P, omega, const)
        np.testing.assert_allclose(nu.values, 1 / (2 * math.pi), atol=1e-14)
    v = solve_stationary_hjb(P, 0.0, OrderParameters(1.0, 0.5), g)
    nu = invariant_measure(P, 0.0, v)
    gibbs = np.exp(-2 * v.values / P.sigma**2)
    gibbs /= g.integrate(gibbs)
    np.testing.assert_allclose(nu.values, gibbs, atol=1e-13)


def test_invariant_measure_against_direct_formula():
    # nu ~ xi^{-1} [int_0^{2pi} xi + (e^{-4 pi w/s^2} - 1) int_0^x xi] by adaptive quadrature
    omega = 0.7
    a = OrderParameters(0.9, -0.4)
    v = solve_stationary_hjb(P, omega, a, TorusGrid(64))
    nu = invariant_measure(P, omega, v)
    vf = trig_interp(v)
    s2 = P.sigma**2

    def xi(x):
        return math.exp(-(2 / s2) * (omega * x - vf(x)))

    total = integrate.quad(xi, 0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13)[0]
    fac = math.expm1(-4 * math.pi * omega / s2)

    def unnorm(x):
        return (total + fac * integrate.quad(xi, 0, x, epsabs=1e-13, epsrel=1e-13)[0]) / xi(x)

    z = integrate.quad(unnorm, 0, 2 * math.pi, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    xs = v.x[::8]
    ref = np.array([unnorm(x) for x in xs]) / z
    np.testing.assert_allclose(nu.values[::8], ref, atol=1e-8)


def test_fp_residual_examples():
    g = TorusGrid(64)
    const = TorusField(g, np.zeros(64))
    uniform = TorusField(g, np.full(64, 1 / (2 * math.pi)))
    assert fp_residual(P, 3.0, const, uniform) < 1e-12
    bumped = TorusField(g, (1 + 0.1 * np.cos(g.points)) / (2 * math.pi))
    # sigma^2/2 * 0.1 cos / 2pi has max 0.5 * 0.1 / 2pi ~ 8e-3
    assert fp_residual(P, 0.0, const, bumped) > 1e-3
