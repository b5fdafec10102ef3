"""Two bosonic modes coupled to structured thermal baths: exact open-system
dynamics, time-local moment equations, and cross-validating diagnostics."""

__version__ = "0.1.0"

from .bath import (BathResponse, BathSpec, Flat, FlatOccupation, MultiPeak,
                   QuadratureError, SuperOhmicExpCutoff, SystemSpec, Tabulated,
                   Thermal, alpha, j_value, occupation, response,
                   response_continued)
from .exact import (CoupledBath, MultiBathSpec, PoleSet, SecondMoments,
                    UndampedModeError, denominator_d, exact_moments,
                    exact_moments_multibath, exact_moments_spectral,
                    exact_steady_state, find_poles, green_matrix,
                    perturbative_pole_rate, propagator_D)
from .meq import (Generator, KossakowskiPair, SingularGeneratorError,
                  br_generator, br_perturbative_rate, closed_form_eigenvalues,
                  collective_generator, evolve, from_moment_vector,
                  individual_generator, kossakowski, lindblad_rates,
                  markov_scale, multibath_generator, secularize,
                  spbr_generator, spbr_perturbative_rate, stability_margin,
                  steady_state, to_moment_vector)
from .diag import (MinimumUncertaintyState, OracleConfig, TruncationError,
                   discretized_bath_oracle, fock_oracle,
                   gaussian_positivity_violation, min_eigen_F,
                   sum_rule_residual)
