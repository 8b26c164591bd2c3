//! Prior hyperparameters: Minnesota prior on the autoregressive coefficients,
//! a diffuse Gaussian prior on `vec(B⁻¹)` and exponential priors on the
//! degrees of freedom.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::linalg;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Minnesota hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinnesotaConfig {
    /// Overall tightness.
    pub kappa1: f64,
    /// Relative tightness of cross-variable lags.
    pub kappa2: f64,
    /// Lag decay exponent.
    pub kappa3: f64,
    /// Scale of the intercept prior.
    pub kappa4: f64,
    /// Per-variable scales `σ_q`.
    pub sigma: DVector<f64>,
    /// Prior mean of each variable's own first-lag coefficient.
    pub first_lag_mean: DVector<f64>,
}

impl MinnesotaConfig {
    /// κ = (3, 0.5, 1, 100) with zero own-first-lag means, appropriate for
    /// data in growth rates.
    pub fn with_scales(sigma: DVector<f64>) -> Self {
        let n = sigma.len();
        MinnesotaConfig {
            kappa1: 3.0,
            kappa2: 0.5,
            kappa3: 1.0,
            kappa4: 100.0,
            sigma,
            first_lag_mean: DVector::zeros(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kappas = [self.kappa1, self.kappa2, self.kappa3, self.kappa4];
        if kappas.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::SamplerConfig("Minnesota κ values must be positive".into()));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::SamplerConfig("Minnesota scales σ must be positive".into()));
        }
        if self.first_lag_mean.len() != self.sigma.len() {
            return Err(Error::SamplerConfig(
                "first-lag means and scales differ in length".into(),
            ));
        }
        Ok(())
    }
}

/// Support handling for the degrees-of-freedom prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSupport {
    /// `λ = 2 + η` with `η` exponential of mean `λ̄ - 2`; prior mean stays `λ̄`.
    #[default]
    Shift,
    /// Exponential of mean `λ̄` truncated to `λ > 2`. By memorylessness this is
    /// `2 + η` with `η` exponential of mean `λ̄`.
    Truncate,
}

/// Complete prior specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    /// Prior mean of `a = vec(C)`, length `N(Np+1)`.
    pub a_mean: DVector<f64>,
    /// Diagonal prior variances of `a`.
    pub a_var: DVector<f64>,
    /// Prior mean of `vec(B⁻¹)` (column-major).
    pub b_mean: DVector<f64>,
    /// Common prior standard deviation of each element of `B⁻¹`.
    pub b_sd: f64,
    /// Prior means `λ̄_i`.
    pub lambda_mean: DVector<f64>,
    #[serde(default)]
    pub lambda_support: LambdaSupport,
}

impl PriorSet {
    pub fn n_vars(&self) -> usize {
        self.lambda_mean.len()
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        let k = n * p + 1;
        if self.a_mean.len() != n * k || self.a_var.len() != n * k {
            return Err(Error::SamplerConfig(format!(
                "coefficient prior must have length {}",
                n * k
            )));
        }
        if self.b_mean.len() != n * n || self.lambda_mean.len() != n {
            return Err(Error::SamplerConfig("prior dimensions do not match the model".into()));
        }
        if self.a_var.iter().any(|v| !(*v > 0.0)) || !(self.b_sd > 0.0) {
            return Err(Error::SamplerConfig("prior variances must be positive".into()));
        }
        if self.lambda_mean.iter().any(|m| !(*m > 2.0)) && self.lambda_support == LambdaSupport::Shift {
            return Err(Error::SamplerConfig(
                "shifted exponential prior needs λ̄ > 2".into(),
            ));
        }
        Ok(())
    }

    /// Mean of the exponential excess `η = λ - 2`.
    pub fn lambda_excess_mean(&self, i: usize) -> f64 {
        match self.lambda_support {
            LambdaSupport::Shift => self.lambda_mean[i] - 2.0,
            LambdaSupport::Truncate => self.lambda_mean[i],
        }
    }

    pub fn log_prior_a(&self, a: &DVector<f64>) -> f64 {
        a.iter()
            .zip(self.a_mean.iter().zip(self.a_var.iter()))
            .map(|(x, (m, v))| -0.5 * (LN_2PI + v.ln() + (x - m).powi(2) / v))
            .sum()
    }

    pub fn log_prior_b(&self, binv: &DMatrix<f64>) -> f64 {
        let var = self.b_sd * self.b_sd;
        binv.iter()
            .zip(self.b_mean.iter())
            .map(|(x, m)| -0.5 * (LN_2PI + var.ln() + (x - m).powi(2) / var))
            .sum()
    }

    /// Log density of `λ_i`; `-∞` outside `λ > 2`.
    pub fn log_prior_lambda(&self, i: usize, lambda: f64) -> f64 {
        if !(lambda > 2.0) {
            return f64::NEG_INFINITY;
        }
        exponential_log_density(lambda - 2.0, self.lambda_excess_mean(i))
    }
}

/// Log density of an exponential distribution parameterised by its mean.
pub fn exponential_log_density(x: f64, mean: f64) -> f64 {
    if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        -mean.ln() - x / mean
    }
}

/// Diagonal prior variances for `a`, in coefficient-vector order
/// (equation-major, then `[constant, lag 1 block, ..., lag p block]`).
pub fn minnesota_variances(cfg: &MinnesotaConfig, n: usize, p: usize) -> DVector<f64> {
    let k = n * p + 1;
    DVector::from_fn(n * k, |idx, _| {
        let eq = idx / k;
        let j = idx % k;
        if j == 0 {
            return (cfg.sigma[eq] * cfg.kappa4).powi(2);
        }
        let lag = ((j - 1) / n + 1) as f64;
        let var = (j - 1) % n;
        let decay = lag.powf(cfg.kappa3);
        if var == eq {
            (cfg.kappa1 / decay).powi(2)
        } else {
            (cfg.kappa1 * cfg.kappa2 * cfg.sigma[eq] / (decay * cfg.sigma[var])).powi(2)
        }
    })
}

/// Prior means for `a`: `first_lag_mean` on own first lags, zero elsewhere.
pub fn minnesota_mean(cfg: &MinnesotaConfig, n: usize, p: usize) -> DVector<f64> {
    let k = n * p + 1;
    let mut mean = DVector::zeros(n * k);
    for eq in 0..n {
        mean[eq * k + 1 + eq] = cfg.first_lag_mean[eq];
    }
    mean
}

/// Residual standard deviation of a univariate AR(p) with intercept for each
/// variable.
pub fn estimate_sigma(panel: &TimeSeriesPanel, p: usize) -> Result<DVector<f64>> {
    let t = panel.n_obs();
    if p == 0 || t < 2 * p + 3 {
        return Err(Error::Sizing(format!(
            "{t} observations are too few for univariate AR({p}) fits"
        )));
    }
    let rows = t - p;
    let mut sigma = DVector::zeros(panel.n_vars());
    for q in 0..panel.n_vars() {
        let series = panel.values.column(q);
        let first = series[0];
        if series.iter().all(|v| *v == first) {
            return Err(Error::ZeroVariance(panel.names[q].clone()));
        }
        let x = DMatrix::from_fn(rows, p + 1, |r, c| if c == 0 { 1.0 } else { series[p + r - c] });
        let y = DMatrix::from_fn(rows, 1, |r, _| series[p + r]);
        let coef = linalg::least_squares(&x, &y)
            .map_err(|_| Error::ZeroVariance(panel.names[q].clone()))?;
        let resid = &y - &x * coef;
        let dof = (rows - p - 1) as f64;
        let sd = (resid.norm_squared() / dof).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(panel.names[q].clone()));
        }
        sigma[q] = sd;
    }
    Ok(sigma)
}

/// Minnesota coefficient prior, `B⁻¹ ~ N(0, 1000² I)` elementwise and
/// `λ̄_i = 10`.
pub fn default_priors(cfg: &MinnesotaConfig, n: usize, p: usize) -> PriorSet {
    PriorSet {
        a_mean: minnesota_mean(cfg, n, p),
        a_var: minnesota_variances(cfg, n, p),
        b_mean: DVector::zeros(n * n),
        b_sd: 1000.0,
        lambda_mean: DVector::from_element(n, 10.0),
        lambda_support: LambdaSupport::Shift,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> MinnesotaConfig {
        MinnesotaConfig::with_scales(DVector::from_element(n, 1.0))
    }

    #[test]
    fn own_lag_variances() {
        let v = minnesota_variances(&cfg(2), 2, 2);
        // equation 0: [const, lag1 v0, lag1 v1, lag2 v0, lag2 v1]
        assert_eq!(v[1], 9.0);
        assert_eq!(v[3], 2.25);
    }

    #[test]
    fn cross_and_constant_variances() {
        let v = minnesota_variances(&cfg(2), 2, 1);
        assert!((v[2] - 2.25).abs() < 1e-15);
        assert_eq!(v[0], 10_000.0);
    }

    #[test]
    fn cross_variance_uses_scale_ratio() {
        let mut c = cfg(2);
        c.sigma = DVector::from_vec(vec![2.0, 1.0]);
        let v = minnesota_variances(&c, 2, 1);
        // equation 0 on variable 1: (3 * 0.5 * 2 / 1)^2
        assert!((v[2] - 9.0).abs() < 1e-14);
        // equation 1 on variable 0: (3 * 0.5 * 1 / 2)^2
        assert!((v[3 + 1] - 0.5625).abs() < 1e-14);
    }

    #[test]
    fn means_place_first_lag_only() {
        let mut c = cfg(2);
        assert!(minnesota_mean(&c, 2, 2).iter().all(|v| *v == 0.0));
        c.first_lag_mean = DVector::from_element(2, 1.0);
        let m = minnesota_mean(&c, 2, 2);
        let ones: Vec<usize> = m.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect();
        assert_eq!(ones, vec![1, 5 + 2]);
        assert_eq!(m[0], 0.0);
        assert_eq!(m[5], 0.0);
    }

    #[test]
    fn defaults() {
        let p = default_priors(&cfg(5), 5, 2);
        assert_eq!(p.b_sd, 1000.0);
        assert!(p.lambda_mean.iter().all(|l| *l == 10.0));
        assert_eq!(p.a_mean.len(), 55);
        assert_eq!(p.lambda_excess_mean(0), 8.0);
        p.validate(5, 2).unwrap();
    }

    #[test]
    fn densities_finite_at_means() {
        let p = default_priors(&cfg(2), 2, 1);
        assert!(p.log_prior_a(&p.a_mean).is_finite());
        let b = DMatrix::from_column_slice(2, 2, p.b_mean.as_slice());
        assert!(p.log_prior_b(&b).is_finite());
        assert!(p.log_prior_lambda(0, 10.0).is_finite());
        assert_eq!(p.log_prior_lambda(0, 1.5), f64::NEG_INFINITY);
        assert!((exponential_log_density(0.0, 10.0).exp() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn truncation_is_memoryless_shift() {
        let mut p = default_priors(&cfg(1), 1, 1);
        p.lambda_support = LambdaSupport::Truncate;
        assert_eq!(p.lambda_excess_mean(0), 10.0);
    }
}
