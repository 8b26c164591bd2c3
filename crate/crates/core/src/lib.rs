//! Bayesian structural vector autoregressions identified through
//! independent Student-t shocks.
//!
//! The pipeline is: [`data`] (panel ingestion and lag selection) →
//! [`priors`] → [`sampler`] (posterior draws of `a`, `B⁻¹`, `λ`) →
//! [`labeling`] (canonical shock ordering, inequality-constraint
//! probabilities and Bayes factors) → [`analysis`] (impulse responses,
//! variance and historical decompositions).

pub mod analysis;
pub mod data;
pub mod error;
pub mod labeling;
pub mod linalg;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod simulate;
pub mod store;

pub use error::{Error, Result};
