"""Relative-position estimation and formation control on sensing graphs."""

from .errors import (
    ConfigError,
    MissingEstimate,
    NotPositiveDefinite,
    NoValidWeights,
    RelformError,
    RuntimeFailure,
    SingularInnovation,
)
from .graph import (
    DirectedEdgeList,
    IncidenceOperator,
    SensingGraph,
    assemble_laplacian,
    build_directed_edges,
    incidence,
    node_submatrix,
    stress_weights,
    verify_weights,
)
from .noise import CovarianceSpec, NoiseStream, build_covariance, sample_gaussian
from .dynamics import (
    MeasurementBatch,
    SwarmState,
    follower_control,
    leader_control,
    measure_edges,
    step_truth,
)
from .filters import (
    FilterBelief,
    ObservationOperator,
    crkf_init,
    crkf_predict,
    crkf_update,
    jrkf_init,
    jrkf_local_gain,
    jrkf_step,
    mle_edge,
    rkf_init,
    rkf_predict,
    rkf_update,
)
from .sim import (
    ESTIMATOR_KEYS,
    MonteCarloSummary,
    PreparedScenario,
    Scenario,
    SimTrace,
    formation_residual,
    prepare,
    run_monte_carlo,
    run_once,
    steady_slice,
)

__version__ = "0.1.0"
