"""Graph-based K-sample tests of equal distributions on k-MST similarity graphs."""

__version__ = "0.1.0"

from .counts_moments import (
    EdgeCounts,
    NullMoments,
    count_edges,
    exact_moments_bruteforce,
    null_moments,
    standardized_counts,
)
from .errors import (
    ConstructionError,
    DegenerateInputError,
    InputError,
    KSGraphError,
    SimulationError,
    UnsupportedSizeError,
)
from .graph_core import (
    Dataset,
    DistanceMatrix,
    GraphConditionStats,
    SimilarityGraph,
    build_kmst,
    condition_stats,
    pairwise_distances,
)
from .inference import (
    TestResult,
    asymptotic_test,
    chi_square_sf,
    exact_permutation_test,
    permutation_test,
    ss_test,
)
from .simulation import PowerReport, ScenarioSpec, estimate_power, generate_scenario
from .statistics import StatValue, matrix_rank, quadratic_form, stat_S, stat_SA, stat_SB, stat_SW
