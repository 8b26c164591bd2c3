//! Conditional updates of the Metropolis-within-Gibbs sampler.
//!
//! The t errors are augmented with precision multipliers `w_{i,t}` so that
//! `ε_{i,t} | w ~ N(0, 1/w_{i,t})` and `w_{i,t} ~ Gamma(λ_i/2, rate λ_i/2)`.
//! Given `w`, the coefficient block is conjugate Gaussian; `B⁻¹` and `λ` are
//! updated by random-walk Metropolis.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::data::RegressionLayout;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::StructuralParams;
use crate::priors::PriorSet;

use super::kernel::structural_residuals;

/// Auxiliary precision multipliers, one per observation and shock.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingWeights {
    /// `(T-p)×N`
    pub w: DMatrix<f64>,
}

impl MixingWeights {
    pub fn ones(rows: usize, n: usize) -> Self {
        MixingWeights { w: DMatrix::from_element(rows, n, 1.0) }
    }
}

/// `w_{i,t} ~ Gamma((λ_i+1)/2, rate (λ_i + ε_{i,t}²)/2)`.
pub fn draw_mixing<R: Rng + ?Sized>(
    params: &StructuralParams,
    layout: &RegressionLayout,
    rng: &mut R,
) -> MixingWeights {
    let eps = structural_residuals(params, layout);
    mixing_from_residuals(&eps, &params.lambda, rng)
}

pub(crate) fn mixing_from_residuals<R: Rng + ?Sized>(
    eps: &DMatrix<f64>,
    lambda: &DVector<f64>,
    rng: &mut R,
) -> MixingWeights {
    let mut w = DMatrix::zeros(eps.nrows(), eps.ncols());
    for i in 0..eps.ncols() {
        let shape = 0.5 * (lambda[i] + 1.0);
        for t in 0..eps.nrows() {
            let rate = 0.5 * (lambda[i] + eps[(t, i)].powi(2));
            w[(t, i)] = Gamma::new(shape, 1.0 / rate)
                .expect("positive gamma parameters")
                .sample(rng);
        }
    }
    MixingWeights { w }
}

/// Gaussian full conditional of `a`: returns `(mean, cholesky factor of the
/// precision)`.
pub fn a_conditional(
    binv: &DMatrix<f64>,
    mixing: &MixingWeights,
    layout: &RegressionLayout,
    priors: &PriorSet,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let x = &layout.x;
    let n = binv.nrows();
    let k = x.ncols();
    let mut precision = DMatrix::from_diagonal(&priors.a_var.map(|v| 1.0 / v));
    let mut rhs = priors.a_mean.component_div(&priors.a_var);
    for i in 0..n {
        let b_i = binv.row(i).transpose();
        let w_i = mixing.w.column(i);
        // rows of X scaled by w_{i,t}
        let mut xw = x.clone();
        for (t, mut row) in xw.row_iter_mut().enumerate() {
            row *= w_i[t];
        }
        let gram = xw.transpose() * x;
        let s_i = &layout.y * &b_i;
        let xws = xw.transpose() * s_i;
        precision += (&b_i * b_i.transpose()).kronecker(&gram);
        rhs += b_i.kronecker(&xws);
    }
    debug_assert_eq!(precision.nrows(), n * k);
    let chol = precision
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let mean = chol.solve(&rhs);
    Ok((mean, chol.l()))
}

/// Exact draw of `a` from its Gaussian full conditional.
pub fn draw_a<R: Rng + ?Sized>(
    binv: &DMatrix<f64>,
    mixing: &MixingWeights,
    layout: &RegressionLayout,
    priors: &PriorSet,
    rng: &mut R,
) -> Result<DVector<f64>> {
    draw_a_scaled(binv, mixing, layout, priors, 1.0, rng)
}

/// `noise_scale` multiplies the random part of the draw; anything other than
/// one samples from the wrong distribution and exists for sampler mutation
/// tests.
pub(crate) fn draw_a_scaled<R: Rng + ?Sized>(
    binv: &DMatrix<f64>,
    mixing: &MixingWeights,
    layout: &RegressionLayout,
    priors: &PriorSet,
    noise_scale: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (mean, l) = a_conditional(binv, mixing, layout, priors)?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // x = L⁻ᵀ z has covariance (L Lᵀ)⁻¹
    let dev = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(mean + dev * noise_scale)
}

/// Conditional log target of `B⁻¹` given `a`, `w` (up to a constant).
///
/// `(T-p) log|det B⁻¹| - ½ Σ w_{i,t} ε_{i,t}² + log N(vec B⁻¹; b̄, σ_b² I)`.
pub fn binv_log_target(
    binv: &DMatrix<f64>,
    resid: &DMatrix<f64>,
    mixing: &MixingWeights,
    priors: &PriorSet,
) -> f64 {
    let Some(log_det) = linalg::log_abs_det(binv) else {
        return f64::NEG_INFINITY;
    };
    let eps = resid * binv.transpose();
    let quad: f64 = eps.component_mul(&eps).component_mul(&mixing.w).sum();
    resid.nrows() as f64 * log_det - 0.5 * quad + priors.log_prior_b(binv)
}

/// Outcome of one `B⁻¹` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BinvUpdate {
    pub binv: DMatrix<f64>,
    /// One flag per row block.
    pub accepted: Vec<bool>,
}

/// Random-walk Metropolis on `B⁻¹`, one row at a time.
///
/// Row `i` enters the weighted residual sum of squares only through
/// `b_iᵀ S_i b_i` with `S_i = Σ_t w_{i,t} u_t u_tᵀ`; the Gaussian increment for
/// row `i` has covariance `scales[i]² (S_i + I/σ_b²)⁻¹`. The shape depends only
/// on the conditioning values, so the proposal is symmetric. Proposals that
/// make `B⁻¹` singular are rejected.
pub fn draw_binv<R: Rng + ?Sized>(
    current: &DMatrix<f64>,
    resid: &DMatrix<f64>,
    mixing: &MixingWeights,
    priors: &PriorSet,
    scales: &[f64],
    rng: &mut R,
) -> Result<BinvUpdate> {
    let n = current.nrows();
    let t_eff = resid.nrows() as f64;
    let prior_prec = 1.0 / (priors.b_sd * priors.b_sd);
    let mut binv = current.clone();
    let mut accepted = Vec::with_capacity(n);
    for i in 0..n {
        let mut s_i = DMatrix::zeros(n, n);
        for t in 0..resid.nrows() {
            let u = resid.row(t);
            s_i += (u.transpose() * u) * mixing.w[(t, i)];
        }
        let mut shape = s_i.clone();
        for d in 0..n {
            shape[(d, d)] += prior_prec;
        }
        let chol = shape.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l_t = chol.l().transpose();

        let row_target = |m: &DMatrix<f64>, s: &DMatrix<f64>| -> f64 {
            let Some(log_det) = linalg::log_abs_det(m) else {
                return f64::NEG_INFINITY;
            };
            let b = m.row(i).transpose();
            let mut prior = 0.0;
            for c in 0..n {
                let mean = priors.b_mean[c * n + i];
                prior -= 0.5 * (b[c] - mean).powi(2) * prior_prec;
            }
            let quad = (b.transpose() * s * &b)[(0, 0)];
            t_eff * log_det - 0.5 * quad + prior
        };

        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = l_t
            .solve_upper_triangular(&z)
            .ok_or(Error::NotPositiveDefinite)?
            * scales[i];
        let mut proposal = binv.clone();
        for c in 0..n {
            proposal[(i, c)] += step[c];
        }
        let current_target = row_target(&binv, &s_i);
        let proposal_target = row_target(&proposal, &s_i);
        let log_u: f64 = rng.gen::<f64>().ln();
        let ok = proposal_target.is_finite()
            && proposal.determinant().abs() > 1e-12
            && log_u < proposal_target - current_target;
        if ok {
            binv = proposal;
        }
        accepted.push(ok);
    }
    Ok(BinvUpdate { binv, accepted })
}

/// Sufficient statistics of the mixing weights for one shock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaStats {
    pub count: f64,
    pub sum_w: f64,
    pub sum_log_w: f64,
}

impl GammaStats {
    pub fn from_column(mixing: &MixingWeights, i: usize) -> Self {
        let col = mixing.w.column(i);
        GammaStats {
            count: col.len() as f64,
            sum_w: col.sum(),
            sum_log_w: col.iter().map(|w| w.ln()).sum(),
        }
    }
}

/// Log target of `θ = ln(λ - 2)`: prior on `λ`, `Π_t Gamma(w_t; λ/2, λ/2)` and
/// the Jacobian `λ - 2`.
pub fn lambda_log_target(theta: f64, stats: &GammaStats, prior_excess_mean: f64) -> f64 {
    let excess = theta.exp();
    let lambda = 2.0 + excess;
    if !lambda.is_finite() {
        return f64::NEG_INFINITY;
    }
    let half = 0.5 * lambda;
    let data = stats.count * (half * half.ln() - ln_gamma(half))
        + (half - 1.0) * stats.sum_log_w
        - half * stats.sum_w;
    let prior = -prior_excess_mean.ln() - excess / prior_excess_mean;
    data + prior + theta
}

/// Per-shock random-walk Metropolis on `ln(λ_i - 2)`.
pub fn draw_lambda<R: Rng + ?Sized>(
    current: &DVector<f64>,
    mixing: &MixingWeights,
    priors: &PriorSet,
    scales: &[f64],
    rng: &mut R,
) -> (DVector<f64>, Vec<bool>) {
    let mut lambda = current.clone();
    let mut accepted = Vec::with_capacity(current.len());
    for i in 0..current.len() {
        let stats = GammaStats::from_column(mixing, i);
        let m = priors.lambda_excess_mean(i);
        let theta = (current[i] - 2.0).ln();
        let z: f64 = rng.sample(StandardNormal);
        let proposal = theta + scales[i] * z;
        let log_ratio = lambda_log_target(proposal, &stats, m) - lambda_log_target(theta, &stats, m);
        let log_u: f64 = rng.gen::<f64>().ln();
        let new_lambda = 2.0 + proposal.exp();
        let ok = log_u < log_ratio && new_lambda > 2.0 && new_lambda.is_finite();
        if ok {
            lambda[i] = new_lambda;
        }
        accepted.push(ok);
    }
    (lambda, accepted)
}
