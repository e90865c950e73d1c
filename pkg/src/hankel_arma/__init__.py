"""Nuclear-norm penalized subspace identification of ARMA models.

Simulation and state-space realization (:mod:`hankel_arma.arma`), Hankel
matrices (:mod:`hankel_arma.hankel`), least-squares, penalized and
constrained estimators (:mod:`hankel_arma.solver`), order and model
recovery (:mod:`hankel_arma.realization`), the closed-form error bound
(:mod:`hankel_arma.theory`) and its Monte Carlo checks
(:mod:`hankel_arma.montecarlo`).
"""

__version__ = "0.1.0"

from hankel_arma.arma import (ArmaModel, CovarianceModel, NonStationaryError, QuadratureError,
                              StateSpaceModel, Trajectory, autocovariance, covariance_model,
                              density_extrema, random_stable, simulate, simulate_state_space,
                              spectral_density, to_state_space)
from hankel_arma.hankel import (HankelSet, StructuredMatrices, build_hankel, build_structured,
                                low_noise_hankel, nuisance, verify_hankel_identity)
from hankel_arma.solver import (InfeasibleError, SolverConfig, SolverResult, rank_penalized_oracle,
                                solve_constrained, solve_ls, solve_nuclear, svt)
from hankel_arma.realization import RealizationResult, estimate_order, realize, realize_result
from hankel_arma.theory import (BoundReport, TheoryContext, chi_tail_bounds, delta_bound, lambda_bound,
                                operator_extremes, optimize_xi, q_lower_bound, sigma_H_spectrum,
                                width_bound)
from hankel_arma.montecarlo import (DescentConeSpec, McConfig, ScaleGuardError, calibrate_eta, dist_to_polar,
                                    mc_estimation_experiment, mc_H_norms, mc_sigma_H, mc_width)
