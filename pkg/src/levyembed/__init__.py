"""Skorokhod embeddings for Lévy processes via the Poisson equation A*H = h1 - h0."""

__version__ = "0.1.0"

from .errors import (ConfigError, DegenerateField, FeasibilityBreached, LevyEmbedError,
                     QuadratureError, TailMassError, UnsupportedKind)
from .levy_core import (CharExponent, JumpMeasure, LevyTriplet, ProcessClass, SmoothFunction,
                        adjoint_apply, classify, eta_eval, generator_apply,
                        type0_sufficient_check)
from .errors import RejectedPair
from .density import DensityPair, DensitySpec, check_regularity, fourier
from .poisson import (Feasibility, PoissonSolution, RatioFunction, check_feasibility, check_moments,
                      lipschitz_diag, ratio_eval, residual, resolvent_oracle, solve_H)
from .pathsim import PathConfig, SamplePath, sample_increment, sample_initial, simulate_path
from .embed import (ClockEngine, ClockState, EmbeddingOutcome, SpeedField, delta_schedule,
                    regularize, step_clock, stop_time)
from .verify import (MCConfig, MCReport, dynkin_check, fokker_planck_residual, marginal_check,
                     prepare, run_embedding_mc)
