"""Vehicle-group selection for cooperative map-matching localization.

The localization error of a group of road-constrained vehicles is modelled
as the centroid of the polygon cut out by their lane constraints.  The
package evaluates that error and picks the best M of N vehicles, exactly for
equal noise variances and heuristically otherwise.
"""

from .error_model import (
    ContinuousOptimum,
    GapModel,
    ObjectiveValue,
    SelectionEvaluator,
    asymptotic_e0_sq,
    continuous_optimum,
    expected_e0_sq_asymptotic,
    gap_density,
    linearization_valid,
    objective,
    objective_batch,
    regular_angles,
)
from .errors import (
    AllSamplesInfeasibleError,
    CMMError,
    DegenerateAreaError,
    EmptyRegionError,
    GapAtLeastPiError,
    NoFeasibleSubsetError,
    TooLargeError,
    UnboundedError,
    UnequalVariancesError,
)
from .geometry import (
    ConvexPolygonSummary,
    HalfPlaneSystem,
    RoadConstraint,
    check_bounded,
    intersect_halfplanes,
    sensitivity_fd,
    sensitivity_matrix,
)
from .report import Selection, SolverReport
from .select_bnb import (
    bnb_speedup_experiment,
    bound_function,
    branch_and_bound,
    brute_force,
    combination_rank,
    exhaustive_objectives,
)
from .select_ce import CEParams, PreselectParams, cross_entropy, preselect, random_search, round_to_roads
from .simulate import (
    EqualVariance,
    PaperVariance,
    Scenario,
    Uniform,
    VonMises,
    compare_angle_distributions,
    generate_scenario,
    monte_carlo_error,
)

__version__ = "0.1.0"
