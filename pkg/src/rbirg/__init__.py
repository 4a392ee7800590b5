"""Randomized block-coordinate iterative regularized gradient descent.

A single-loop solver for bilevel problems of the form "minimize g over the
minimizers of f on a block-structured set X", with a diminishing
regularization sequence folded into the iteration, plus the classical
two-loop regularization baseline, stock problem oracles (ill-posed least
squares, penalty-reformulated constrained programs, image deblurring), and
an experiment CLI.
"""

from .core import (BlockSetSpec, BlockStructure, ScheduleError, ScheduleReport,
                   StepSchedule, ball_set, box_set, default_schedule,
                   even_block_sizes, free_set, make_block_structure,
                   make_schedule, nonnegative_set, project_block,
                   step_schedule_eval, validate_schedule)
from .problems import (BilevelProblem, LeastSquaresInstance, PenaltyInstance,
                       builtin_penalty_problem, least_squares_optimum,
                       least_squares_problem, least_squares_value_subgrad,
                       load_least_squares, min_norm_oracle, penalty_problem,
                       penalty_value_subgrad, sq_norm_value_subgrad,
                       strongly_convex_quadratic_outer)
from .solver import (BlockSampler, RunTrace, SolverState, TraceRow,
                     default_checkpoints, have_extension, initial_state,
                     rbirg_step, recompute_average, run_rbirg, sample_block,
                     trace_to_csv, uniform_sampler)
from .baselines import (RegularizedSolveReport, full_irg, merge_to_single_block,
                        solve_regularized, sweep_to_csv, two_loop_sweep)
from .diagnostics import (RateFit, SandwichReport, check_L_sandwich,
                          feasibility_gap, fit_rate_slope, weighted_distance_L)

__version__ = "0.1.0"
