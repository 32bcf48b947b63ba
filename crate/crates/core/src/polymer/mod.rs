//! Directed polymers in the smoothed noise: Feynman-Kac weighted Brownian
//! ensembles and the two-path error functional.

mod environment;
mod error_term;
mod paths;
mod stopping;
mod weights;

pub use environment::{interpolate, Environment, Location};
pub use error_term::{
    environment_grid, estimate_error_term, scaling_study, ErrorTermConfig, ErrorTermSample, ErrorTermSummary, InitialHeight,
    ScalingResult, MAX_DISCARD_FRACTION, MIN_EPSILON_SPAN, NOISE_CELLS_PER_EPSILON,
};
pub use paths::{sample_paths, PathEnsemble, PathSampler, PATH_MEMORY_BUDGET};
pub use stopping::{ito_convergence, ito_residual, ito_residual_with_rate, stopped_integral, stopping_times, ItoConvergence, StoppingPair};
pub use weights::{endpoint_density, fk_weight, fk_weight_with, DensityEstimate, WeightedEnsemble, ESS_FLOOR};
