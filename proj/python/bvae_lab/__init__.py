"""Linear Gaussian beta-VAE lab: closed-form objectives, stationary solver and sweeps."""

from ._core import (  # noqa: F401
    ConfigError,
    DecoderParams,
    EncoderParams,
    GroundTruthModel,
    LinearParams,
    __version__,
    check_results,
    config_hash,
    data_covariance,
    data_log_likelihood,
    default_beta_grid,
    elbo_terms,
    gradient,
    ground_truth_posterior,
    mie,
    normalize_config,
    objective_full,
    objective_paper,
    optimal_encoder,
    read_records,
    run_neural_sweep,
    run_sweep,
    sample_data,
    solve,
    sweep_record_columns,
    tie,
)
