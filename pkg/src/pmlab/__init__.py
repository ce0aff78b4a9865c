"""Sequential-measurement laboratory for the Peres-Mermin square.

Exact two-qubit quantum predictions, value-definite noncontextual
hidden-variable models with updating hidden states, and brute-force analysis
of static value assignments.
"""

from .errors import ConsistencyError, ImpossibleBranchError, ValidationError
from .harness import (
    MeasurementPlan,
    RunTranscript,
    StatsReport,
    WitnessReport,
    compare_stats,
    estimate_cabello,
    nonlocality_witness,
    run_batch,
    run_ensemble_exact,
    run_monte_carlo,
    run_trajectory,
    trial_rng,
)
from .hvmodels import (
    EpsilonAssignment,
    HiddenDistribution,
    HiddenState,
    ModelKind,
    init_distribution,
    marginal,
    outcome_of,
    sample_hidden,
    update_after_measurement,
    would_be_joint,
)
from .kscheck import KSReport, cabello_functional, enumerate_valuations, ks_contradiction_check
from .qcore import (
    Observable,
    OutcomeDistribution,
    Projector,
    StateVector,
    born,
    collapse,
    expectation,
    make_state,
    pauli,
    projectors,
    random_state,
    seq_prob,
    tensor,
)
from .square import (
    Context,
    GridIndex,
    PMSquare,
    TripleSpec,
    build_square,
    cabello_value_exact,
    contexts,
    triple_spec,
)

__version__ = "0.1.0"
