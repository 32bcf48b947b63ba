//! Discrete models with explicitly known invariant measures.

mod asep;
mod height;
mod polynomial;
mod ring;

pub use asep::{
    asep_exact_invariance, asep_generator_apply, asep_simulate, AsepEvent, AsepTrajectory, LocalFunction,
    OccupancyConfig, ENUMERATION_LIMIT,
};
pub use height::{local_pattern_identities, wasep_height, wasep_rates, HeightProfile, PatternCheck};
pub use polynomial::{
    antisymmetric_part, generator_apply, generator_pairing_exact, polynomial_library, symmetric_part,
    LocalPolynomial, Monomial, WickEvaluator, DEFAULT_MAX_DEGREE,
};
pub use ring::{discrete_drift, evolve_discrete, nonlinear_drift, RingField, STATIONARY_VARIANCE};
