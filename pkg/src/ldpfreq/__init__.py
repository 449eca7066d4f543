"""Strictly optimal frequency and distribution estimation under local
differential privacy.

The package provides three mechanisms whose worst-case L2 loss meets the
information-theoretic floor up to integer rounding of the support size
(subset selection, an optimized count-mean sketch, and weighted subset
selection), the matching affine estimator, closed-form loss and
lower-bound calculators, brute-force oracles for small dictionaries, and
a seeded benchmark harness.
"""

from .estimation import (
    aggregate_counts,
    empirical_losses,
    estimate_symmetric,
    linear_estimate,
    linear_variance,
    optimal_reconstruction,
)
from .harness import (
    ExperimentConfig,
    LossReport,
    LossRow,
    config_from_dict,
    config_from_file,
    ingest_transactions,
    run_experiment,
    sample_dataset,
    uniform_distribution,
    zipf_distribution,
)
from .linalg import IterationLimitError, NnlsResult, SingularMatrixError, invert, nnls
from .mechanisms import (
    WSS_CONSTRUCTION_CAP,
    ConstructionFailedError,
    MatrixMechanism,
    OcmsScheme,
    SubsetSelectionScheme,
    WssScheme,
    combination_rank,
    combination_unrank,
    next_prime,
    ocms_new,
    perturb_from_matrix,
    ss_new,
    wss_construct,
)
from .model import (
    EstimationMode,
    LdpReport,
    PrivacyBudget,
    SchemeParams,
    SupportCounts,
    SupportScheme,
    frequency_vector,
    largest_remainder_composition,
    load_scheme,
    merge_counts,
    perturbation_matrix,
    save_scheme,
    validate_ldp,
)
from .oracle import (
    MonteCarloResult,
    full_subset_scheme,
    hash_family_census,
    monte_carlo_loss,
    permutation_average,
    random_extremal_scheme,
    run_stream,
    run_suite,
    urp_exact_variance,
    verify_symmetric,
)
from .theory import (
    DeviationFactors,
    FisherBound,
    comm_bound_bits,
    fisher_lower_bound,
    l1_from_l2,
    l1_star,
    l2_of_k,
    l2_star,
    ocms_deviation_factors,
    ocms_mixture_l2,
    optimal_support_size,
    osc_variance,
    reconstruction_trace,
    rounding_deviation_alpha,
    scheme_params,
    sym_variance,
)

__version__ = "0.1.0"

__all__ = [
    "ConstructionFailedError",
    "DeviationFactors",
    "EstimationMode",
    "ExperimentConfig",
    "FisherBound",
    "IterationLimitError",
    "LdpReport",
    "LossReport",
    "LossRow",
    "MatrixMechanism",
    "MonteCarloResult",
    "NnlsResult",
    "OcmsScheme",
    "PrivacyBudget",
    "SchemeParams",
    "SingularMatrixError",
    "SubsetSelectionScheme",
    "SupportCounts",
    "SupportScheme",
    "WSS_CONSTRUCTION_CAP",
    "WssScheme",
    "aggregate_counts",
    "combination_rank",
    "combination_unrank",
    "comm_bound_bits",
    "config_from_dict",
    "config_from_file",
    "empirical_losses",
    "estimate_symmetric",
    "fisher_lower_bound",
    "frequency_vector",
    "full_subset_scheme",
    "hash_family_census",
    "ingest_transactions",
    "invert",
    "l1_from_l2",
    "l1_star",
    "l2_of_k",
    "l2_star",
    "largest_remainder_composition",
    "linear_estimate",
    "linear_variance",
    "load_scheme",
    "merge_counts",
    "monte_carlo_loss",
    "next_prime",
    "nnls",
    "ocms_deviation_factors",
    "ocms_mixture_l2",
    "ocms_new",
    "optimal_reconstruction",
    "optimal_support_size",
    "osc_variance",
    "permutation_average",
    "perturb_from_matrix",
    "perturbation_matrix",
    "random_extremal_scheme",
    "reconstruction_trace",
    "rounding_deviation_alpha",
    "run_experiment",
    "run_stream",
    "run_suite",
    "sample_dataset",
    "save_scheme",
    "scheme_params",
    "ss_new",
    "sym_variance",
    "uniform_distribution",
    "urp_exact_variance",
    "validate_ldp",
    "verify_symmetric",
    "wss_construct",
    "zipf_distribution",
]
