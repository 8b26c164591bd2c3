use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::data::RegressionLayout;
use crate::error::{Error, Result};
use crate::model::StructuralParams;
use crate::priors::PriorSet;

/// Log density of a unit-scale Student-t variate with `lambda` degrees of
/// freedom.
pub fn log_t_density(x: f64, lambda: f64) -> f64 {
    ln_gamma(0.5 * (lambda + 1.0))
        - ln_gamma(0.5 * lambda)
        - 0.5 * (lambda * std::f64::consts::PI).ln()
        - 0.5 * (lambda + 1.0) * (x * x / lambda).ln_1p()
}

/// Reduced-form residuals `U = Y - X C` for the draw's coefficients.
pub fn reduced_residuals(params: &StructuralParams, layout: &RegressionLayout) -> DMatrix<f64> {
    &layout.y - &layout.x * params.coefficient_matrix()
}

/// Structural residuals `ε_t = B⁻¹ u_t`, one row per observation.
pub fn structural_residuals(params: &StructuralParams, layout: &RegressionLayout) -> DMatrix<f64> {
    reduced_residuals(params, layout) * params.binv.transpose()
}

/// Log-likelihood of the independent-t structural model, conditional on the
/// presample.
pub fn log_likelihood(params: &StructuralParams, layout: &RegressionLayout) -> Result<f64> {
    let det = params.binv.determinant();
    let log_det = det.abs().ln();
    if !log_det.is_finite() {
        return Err(Error::Numeric { term: "log|det B⁻¹|", value: log_det });
    }
    let eps = structural_residuals(params, layout);
    let mut density = 0.0;
    for i in 0..eps.ncols() {
        let lambda = params.lambda[i];
        density += eps.column(i).iter().map(|e| log_t_density(*e, lambda)).sum::<f64>();
    }
    if !density.is_finite() {
        return Err(Error::Numeric { term: "t log-density", value: density });
    }
    Ok(layout.n_obs() as f64 * log_det + density)
}

/// Sum of the log prior densities of `a`, `B⁻¹` and `λ`.
pub fn log_prior(params: &StructuralParams, priors: &PriorSet) -> Result<f64> {
    let a = priors.log_prior_a(&params.coefficient_vector());
    if !a.is_finite() {
        return Err(Error::Numeric { term: "coefficient prior", value: a });
    }
    let b = priors.log_prior_b(&params.binv);
    if !b.is_finite() {
        return Err(Error::Numeric { term: "B⁻¹ prior", value: b });
    }
    let l: f64 = (0..params.n_vars())
        .map(|i| priors.log_prior_lambda(i, params.lambda[i]))
        .sum();
    if !l.is_finite() {
        return Err(Error::Numeric { term: "degrees-of-freedom prior", value: l });
    }
    Ok(a + b + l)
}

/// Unnormalised log posterior: `(T-p) log|det B⁻¹| + Σ log f_t(ε_{i,t}; λ_i)`
/// plus the log priors.
pub fn log_posterior_kernel(
    params: &StructuralParams,
    layout: &RegressionLayout,
    priors: &PriorSet,
) -> Result<f64> {
    Ok(log_likelihood(params, layout)? + log_prior(params, priors)?)
}
