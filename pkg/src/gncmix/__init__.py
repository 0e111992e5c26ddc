"""Unsupervised Bayesian hyperspectral unmixing with endmember
variability, spatial classes, and a constrained-HMC Gibbs sampler."""

from .chmc import (
    ChmcConfig,
    DualAveraging,
    TargetSpec,
    adapt_step_size,
    chmc_propose,
    chmc_propose_batch,
    leapfrog_step,
)
from .conditionals import (
    BandContext,
    PixelContext,
    potential_c,
    potential_m,
    potential_psi,
    potential_sigma,
    potential_t,
)
from .data import (
    EndmemberLibrary,
    HsiCube,
    ResultBundle,
    load_cube,
    load_library,
    load_results,
    save_cube,
    save_library,
    save_results,
)
from .endmembers import extract_endmembers
from .errors import (
    ConfigError,
    DataFormatError,
    GncmixError,
    NumericError,
    RankDeficiencyError,
    ReflectionError,
)
from .metrics import (
    align_endmembers,
    armse_abundance,
    classification_accuracy,
    endmember_errors,
    reconstruction_errors,
)
from .model import (
    GncmState,
    VarianceField,
    compute_variance_field,
    log_likelihood_image,
    log_likelihood_pixel,
    reconstruct,
)
from .priors import (
    HyperParams,
    PottsField,
    log_hyperprior_c,
    log_prior_m_col,
    log_prior_psi,
    log_prior_sigma,
    log_prior_t,
    potts_conditional_weights,
)
from .sampler import (
    ChainSummary,
    SamplerConfig,
    initialize_state,
    run_sampler,
    sample_labels,
)
from .simplex import a_to_t, jacobian_a_wrt_t, t_to_a
from .synth import (
    NoiseSpec,
    generate_scene,
    sample_potts_field,
    sample_truncated_dirichlet,
    synthetic_library,
)

__version__ = "0.1.0"
