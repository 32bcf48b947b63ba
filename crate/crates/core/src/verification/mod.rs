//! Statistical and exact checks of the integration-by-parts identities behind
//! white-noise invariance.

mod cancellation;
mod family;
mod ibp;
mod report;
mod stein;

pub use cancellation::{
    cancellation_suite, check_exchangeable_odd, check_primitive_identity, check_slope_integral, g_function,
    mollifier_slope_integral, CancellationConfig, EXACT_TOLERANCE,
};
pub use family::{FFamily, OuterFunction, ScaledFunction};
pub use ibp::{
    compare_common_random_numbers, estimate_gamma, verify_prop_init, verify_prop_smoothed, CrnComparison, GammaEstimate,
    IbpConfig, IbpOutcome, InitialData, ReplicaSample,
};
pub use report::{format_table, VerificationReport, DEFAULT_SE_MULTIPLE};
pub use stein::{
    covariance_check, default_test_functions, sample_initial_observables, sample_stationary_observables,
    stationarity_experiment, stein_residual, SkippedFunction, StationarityConfig, StationarityOutcome, SteinOutcome,
    DEFAULT_RESAMPLES, MIN_STEIN_SAMPLES,
};
