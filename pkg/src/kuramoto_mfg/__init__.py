"""Numerical toolkit for the mean-field Kuramoto game with random intrinsic frequencies."""

from .model import (FrequencyDistribution, ModelParams, QuadratureError, delta0, dist_from_dict,
                    fourier_g, integrate_g, kappa_c, two_dirac)
from .hjb import (HJBConvergenceError, OrderParameters, TorusField, TorusGrid, fp_residual,
                  invariant_measure, solve_stationary_hjb, xi_log)
from .equilibrium import F_kappa, FixedPointReport, G_kappa, dF_origin, find_fixed_points
from .penrose import P, P_prime, count_zeros, kappa_P, N_quartic, trace_curve, threshold_report
from .stability import (TimeGrid, WeightedSignal, apply_L, kernel_K, laplace_of_signal,
                        op_norm_L, solve_resolvent, two_dirac_laplace_solve)
from .dynamics import evolve_mfg, fit_decay_rate, gm_distance, potential_phi

__version__ = "0.1.0"
