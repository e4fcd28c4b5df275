"""Unknown-input decoupled filtering and noise-covariance identifiability.

The package builds stable unbiased filters for linear Gaussian plants driven
by arbitrary unknown inputs, assembles the autocovariance least-squares
regression for the noise covariances from the decoupled innovations, and
diagnoses, by rank analysis and constructive null-space witnesses, why that
regression never determines the covariances uniquely.
"""

__version__ = "0.1.0"

from .als import (
    AlsMatrices,
    AlsProblem,
    AlsSolution,
    InsufficientDataError,
    NonIdentifiableError,
    build_als_matrices,
    empirical_b,
    empirical_b_batches,
    project_psd,
    solve_joint,
    solve_q_given_r,
    solve_r_given_q,
)
from .error_dynamics import (
    AutocovStack,
    ErrorDynamics,
    SteadyStateCov,
    UnstableDynamicsError,
    analytic_autocov,
    build_error_dynamics,
    steady_state_covariance,
)
from .filtering import (
    DesignOptions,
    FilterGains,
    FilterRun,
    GainDesignError,
    design_gains,
    load_gains,
    make_gains,
    run_filter,
    save_gains,
    validate_gains,
)
from .identifiability import (
    EquivalentPair,
    IdentifiabilityReport,
    RankReport,
    UniquenessConditions,
    Witness,
    WitnessNotApplicableError,
    build_identifiability_report,
    check_uniqueness_conditions,
    equivalent_covariance_pair,
    feasible_alpha_interval,
    null_space_basis,
    rank_report,
    witness_deficient_l,
    witness_singular_a,
)
from .simulate import (
    Trajectory,
    UnknownInputSignal,
    generate_unknown_input,
    innovation_sequence,
    parse_input_spec,
    simulate_plant,
)
from .structural import (
    DegeneratePencilError,
    RankMatching,
    RosenbrockPencil,
    StructuralReport,
    check_detectable_pair,
    check_minimum_phase,
    check_rank_matching,
    check_strong_detectability,
    invariant_zeros,
)
from .systems import (
    DegenerateShapingError,
    DimensionError,
    LtiSystem,
    NoiseSpec,
    ValidationReport,
    factor_shaping,
    load_system,
    validate_system,
)

__all__ = [name for name in dir() if not name.startswith("_")]
