"""Solvers for the conformally formulated Einstein constraint equations
on discretized Riemannian grid charts.

The package builds the conformal-method elliptic system (Lichnerowicz
equation plus momentum constraint, optionally electromagnetically
coupled), solves it by barrier-bracketed monotone iteration with an
alternating outer driver, and verifies the reconstructed physical data
against the original constraints.
"""

__version__ = "0.1.0"

from .conformal_data import (ConformalConstants, ConformalData, EMPack,
                             assemble_data, data_from_arrays,
                             sources_from_fluid, tt_project)
from .errors import (BracketingError, ConfigurationError,
                     ConstraintForgeError, DataError, HypothesisError,
                     MetricError, NonConvergenceError, PreconditionError,
                     RouteError, SingularOperatorError, SolverError,
                     SpectralError, VacuumError, exit_code_for)
from .geometry import (GridChart, MetricField, build_chart,
                       build_exhaustion, curvature, metric_from_arrays,
                       metric_from_generator)
from .operators import (assemble_conformal_killing_laplacian,
                        assemble_laplace_beltrami,
                        conformal_killing_operator, solve_linear)
from .spectral import lambda1_conf, lambda1_schrodinger
from .momentum import momentum_rhs, solve_momentum
from .lichnerowicz import (LichnerowiczProblem, PicardTrace,
                           picard_solve, shift_coefficient)
from .barriers import (BarrierPair, HypothesisReport,
                       build_subsolution_nonvacuum,
                       build_subsolution_yamabe, build_supersolution,
                       certify_barriers, check_hypotheses, make_barriers,
                       sweep_tau0)
from .coupled import (SolveSession, solve_coupled_compact,
                      solve_coupled_em, solve_coupled_exhaustion)
from .verification import (InitialDataSet, ResidualReport,
                           constraint_residuals, convergence_study,
                           mms_forcing, reconstruct)
from .regularity import (ExponentLadder, bootstrap_exponents,
                         check_multiplication, hs_feasible)
