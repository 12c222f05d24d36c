"""Discounted LQG control of stochastic descriptor systems.

Pencil analysis, feedback equivalence form, Riccati and Lur'e solvers, the
optimal control layer and a seeded Monte Carlo simulator.
"""

from .exceptions import (AlreadyShifted, DlqgError, EnsembleNotConverged, IllPosed,
                         InconsistentControl, Infeasible, NoStabilizingSolution, NotRegular,
                         NotStabilizable, SingularR, Unsupported)
from .lqg import (CostReport, OptimalControlProblem, OptimalityDae, assemble_optimality_dae,
                  check_regularity, feedback_law, solve_ocp, suboptimality_gap, verify_dissipation)
from .lure import (KypCandidate, LureSolution, Ordering, compare_maximality, ev_diff, kyp_matrix,
                   kyp_residual, solve_lure, solve_riccati, verify_lure_solution)
from .pencil import (MatrixPencil, QuasiWeierstrass, finite_spectrum, is_regular, quasi_weierstrass,
                     spectral_projector, wong_sequences)
from .simulate import (SimConfig, TrajectoryEnsemble, covariance_oracle, estimate_cost,
                       mean_fluctuation_split, simulate)
from .system import (CostWeights, DescriptorSystem, FeedbackForm, Subspace, check_stabilizable,
                     check_wellposed, compute_system_space, compute_vdiff, discount_transform,
                     feedback_equivalence_form, stabilizing_feedback, system_space_wong)

__version__ = "0.1.0"
