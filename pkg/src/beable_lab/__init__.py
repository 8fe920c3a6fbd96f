"""Bell-type jump processes on finite configuration spaces and their discrete-time replacements."""

__version__ = "0.1.0"

from .hilbert import (  # noqa: E402
    Decomposition,
    HermitianOperator,
    ProbabilityVector,
    StateVector,
    UnitaryOperator,
    born_distribution,
    evolve_continuous,
    evolve_discrete,
    haar_random_unitary,
    principal_log_hamiltonian,
    random_state,
)
from .bell import (  # noqa: E402
    CurrentMatrix,
    RateMatrix,
    Trajectory,
    continuous_current,
    jump_rates,
    master_equation_evolve,
    sample_ensemble,
    sample_trajectory,
)
from .discrete import (  # noqa: E402
    DiscreteTrajectory,
    TransitionMatrix,
    iid_step,
    restricted_step,
    restricted_transition_series,
    two_state_transition,
)
from .currents import (  # noqa: E402
    CandidateId,
    ConditionReport,
    candidate_current,
    check_conditions,
    transition_from_current,
    violation_scan,
)
from .circuits import (  # noqa: E402
    Circuit,
    Gate,
    PairPartition,
    gate_partition,
    run_circuit_trajectory,
    verify_pairwise,
)
from .stats import EnsembleStats, compare_distributions  # noqa: E402
