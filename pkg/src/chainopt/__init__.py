"""chainopt: worst-case chain instances, resisting oracles, and the
matching restart-accelerated / cubic-Newton solvers for strongly convex
k-th order optimization."""

from . import errors
from .adversary import (AdversaryState, DuelResult, LowerBoundReport,
                        lower_bound, make_adversary, run_duel,
                        write_transcript)
from .baselines import GreedyChainPeeler, gradient_descent
from .harness import (ExperimentConfig, ExperimentRecord,
                      calibrate_rate_constant, fit_exponent, run_sweep)
from .minimizer import (MinimizerSolution, brute_force_minimizer,
                        coordinate_lower_bound, head_upper_bound, norm_bound,
                        pull_back, solve_chain_minimizer, tail_decay_bound)
from .model import (DerivativeBundle, InstanceParams, RotationBasis,
                    apply_to_vectors, densify_tensor, eval_chain,
                    eval_rotated, instance_from_json, instance_to_json,
                    select_gamma, validate_params)
from .solvers import (DEFAULT_RATE_CONSTANTS, CombinedResult, PhasePlan,
                      SolverConfig, atd_run, combined_solver, crn_step,
                      mu2_proxy_bound, phase_plan, restarted_atd,
                      suboptimality_at_distance)
from .verify import (CheckReport, fd_derivative_check, lemma_suite,
                     lipschitz_estimate, measure_derivative_bound,
                     strong_convexity_check)

__version__ = "0.1.0"
