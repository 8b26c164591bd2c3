//! Metropolis-within-Gibbs posterior sampler for the independent-t SVAR.

pub mod diagnostics;
pub mod geweke;
pub mod gibbs;
pub mod kernel;
pub mod steps;

pub use diagnostics::{diagnostics, diagnostics_multi, DiagnosticsReport};
pub use geweke::{geweke_joint_test, GewekeConfig, GewekeModel, GewekeReport, Mutation};
pub use gibbs::{initial_draw, run_chains, run_gibbs, run_gibbs_stream, Chain, ChainMeta, SamplerConfig, StructuralDraw};
pub use kernel::{log_likelihood, log_posterior_kernel, log_prior, log_t_density};
pub use steps::{draw_a, draw_binv, draw_lambda, draw_mixing, MixingWeights};
