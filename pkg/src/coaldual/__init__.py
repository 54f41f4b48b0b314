"""Block-counting and fixation-line calculus for exchangeable coalescents.

The package computes jump rates of the block-counting process and of
the fixation line for a family of coalescent models, verifies the
distributional duality between the two processes at the generator and
Green-matrix level, and reproduces the associated limit laws by exact
dynamic programming and Monte Carlo simulation.
"""

__version__ = "0.1.0"

from .stirling import (  # noqa: F401
    classical_tables,
    falling_factorial,
    gen_stirling,
    rising_factorial,
    s_alpha,
)

from .paintbox import (  # noqa: F401
    AllocationResult,
    MassPoint,
    coalesced_count_prob,
    line_passage_prob,
    mc_coalesced_count_prob,
    sample_coalesced_count,
    sample_paintbox,
)

from .models import (  # noqa: F401
    BetaLambda,
    CoalescentModel,
    DiracNu,
    Dirichlet,
    DustReport,
    Kingman,
    LambdaAtoms,
    PoissonDirichlet,
    coverage_mass,
    dust_classification,
    format_model,
    is_exact_model,
    laplace_exponent,
    parse_model,
    validate,
)

from .rates import (  # noqa: F401
    RateValue,
    TruncationFailure,
    block_count_rate,
    block_count_total_rate,
    block_cumulative_rate,
    dirichlet_rate_by_compositions,
    fixation_rate,
    fixation_rate_to_infinity,
    fixation_total_rate,
    fixation_total_rate_by_summation,
    infinite_start_diagonal,
    infinite_start_rate,
    mc_rate_estimate,
)

from .duality import (  # noqa: F401
    INF_STATE,
    CheckReport,
    GreenDualityReport,
    TruncatedGenerator,
    build_generators,
    chain_cumulative_prob,
    chain_transition_prob,
    check_chain_duality,
    check_generator_duality,
    check_green_duality,
    check_siegmund_duality,
    green_matrix_block_count,
    green_matrix_fixation_line,
)

from .kernels import (  # noqa: F401
    PackedChain,
    PathBatch,
    backend_name,
    path_seeds,
    run_paths,
)

from .chains import (  # noqa: F401
    CrpChainSpec,
    DirichletLimitLaws,
    ExperimentReport,
    ExperimentRow,
    RowSamplingError,
    SamplePath,
    build_falling_chain,
    build_rising_chain,
    crp_distribution,
    cum_block_rate_large,
    dirichlet_limit_laws,
    dust_convergence_experiment,
    expected_tables,
    jumps_and_absorption,
    mc_duality_test,
    new_table_prob,
    simulate_block_count,
    simulate_fixation_line,
    total_rate_large,
)
