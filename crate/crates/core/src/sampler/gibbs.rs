use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RegressionLayout;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, StructuralParams};
use crate::priors::PriorSet;

use super::steps::{self, MixingWeights};

/// One stored posterior draw.
pub type StructuralDraw = StructuralParams;

/// Sampler run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Total sweeps including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Sweeps between proposal-scale updates during burn-in.
    pub adaptation_window: usize,
    /// Target acceptance band for the Metropolis blocks.
    pub target_acceptance: (f64, f64),
    pub stability_tol: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::desk()
    }
}

impl SamplerConfig {
    /// 60,000 sweeps, 10,000 burn-in, thinning 5.
    pub fn desk() -> Self {
        SamplerConfig {
            iterations: 60_000,
            burn_in: 10_000,
            thin: 5,
            seed: 1,
            adaptation_window: 100,
            target_acceptance: (0.25, 0.40),
            stability_tol: model::DEFAULT_STABILITY_TOL,
        }
    }

    /// 1,000,000 retained sweeps after a 100,000 burn-in.
    pub fn paper_scale() -> Self {
        SamplerConfig {
            iterations: 1_100_000,
            burn_in: 100_000,
            thin: 1,
            ..SamplerConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::SamplerConfig(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 || self.adaptation_window == 0 {
            return Err(Error::SamplerConfig("thin and adaptation window must be positive".into()));
        }
        let (lo, hi) = self.target_acceptance;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::SamplerConfig("target acceptance band must satisfy 0 < lo < hi < 1".into()));
        }
        if !(self.stability_tol > 0.0 && self.stability_tol < 1.0) {
            return Err(Error::SamplerConfig("stability tolerance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Run metadata stored next to the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    /// Independent stream index used for multi-chain runs.
    pub stream: u64,
    pub burn_in: usize,
    pub thin: usize,
    pub total_iterations: usize,
    pub n_vars: usize,
    pub n_lags: usize,
    /// Post-burn-in acceptance rate per row of `B⁻¹`.
    pub acceptance_binv: Vec<f64>,
    /// Post-burn-in acceptance rate per `λ_i`.
    pub acceptance_lambda: Vec<f64>,
    /// Frozen proposal scales.
    pub scales_binv: Vec<f64>,
    pub scales_lambda: Vec<f64>,
    pub runtime_secs: f64,
    pub warnings: Vec<String>,
}

/// Thinned post-burn-in draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<StructuralDraw>,
    /// Whether each draw's companion matrix is stable.
    pub stable: Vec<bool>,
    pub meta: ChainMeta,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn n_unstable(&self) -> usize {
        self.stable.iter().filter(|s| !**s).count()
    }

    /// Stable draws only.
    pub fn stable_draws(&self) -> impl Iterator<Item = &StructuralDraw> {
        self.draws.iter().zip(&self.stable).filter(|(_, s)| **s).map(|(d, _)| d)
    }

    /// Chain made of the given draws with placeholder metadata.
    pub fn from_draws(draws: Vec<StructuralDraw>) -> Self {
        let (n, p) = draws
            .first()
            .map(|d| (d.n_vars(), d.n_lags()))
            .unwrap_or((0, 0));
        let stable = draws
            .iter()
            .map(|d| model::is_stable(d, model::DEFAULT_STABILITY_TOL))
            .collect();
        Chain {
            meta: ChainMeta {
                seed: 0,
                stream: 0,
                burn_in: 0,
                thin: 1,
                total_iterations: draws.len(),
                n_vars: n,
                n_lags: p,
                acceptance_binv: Vec::new(),
                acceptance_lambda: Vec::new(),
                scales_binv: Vec::new(),
                scales_lambda: Vec::new(),
                runtime_secs: 0.0,
                warnings: Vec::new(),
            },
            draws,
            stable,
        }
    }
}

/// Least-squares starting point: OLS coefficients, `B⁻¹` the inverse Cholesky
/// factor of the residual covariance, `λ_i = 10`.
pub fn initial_draw(layout: &RegressionLayout) -> Result<StructuralDraw> {
    let n = layout.n_vars();
    let p = layout.lags;
    let coef = linalg::least_squares(&layout.x, &layout.y)?;
    let resid = &layout.y - &layout.x * &coef;
    let sigma = linalg::residual_covariance(&resid);
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::DegenerateData("residual covariance is not positive definite".into()))?;
    let binv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor is singular".into()))?;
    let a = DVector::from_column_slice(coef.as_slice());
    StructuralParams::from_coefficients(&a, n, p, binv, DVector::from_element(n, 10.0))
}

/// Mutable sampler state: current parameters plus adaptive scales.
pub(crate) struct SweepState {
    pub draw: StructuralDraw,
    pub mixing: MixingWeights,
    pub scales_binv: Vec<f64>,
    pub scales_lambda: Vec<f64>,
    /// Multiplier on the random part of the coefficient draw (1 = correct).
    pub a_noise_scale: f64,
}

impl SweepState {
    pub fn new(draw: StructuralDraw, rows: usize) -> Self {
        let n = draw.n_vars();
        SweepState {
            mixing: MixingWeights::ones(rows, n),
            scales_binv: vec![2.38 / (n as f64).sqrt(); n],
            scales_lambda: vec![1.0; n],
            a_noise_scale: 1.0,
            draw,
        }
    }

    /// One sweep `w → a → B⁻¹ → λ`; returns acceptance flags for the
    /// Metropolis blocks.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        layout: &RegressionLayout,
        priors: &PriorSet,
        rng: &mut R,
    ) -> Result<(Vec<bool>, Vec<bool>)> {
        let n = self.draw.n_vars();
        let p = self.draw.n_lags();
        self.mixing = steps::draw_mixing(&self.draw, layout, rng);
        let a = steps::draw_a_scaled(&self.draw.binv, &self.mixing, layout, priors, self.a_noise_scale, rng)?;
        let coef = DMatrix::from_column_slice(n * p + 1, n, a.as_slice());
        let resid = &layout.y - &layout.x * coef;
        let update = steps::draw_binv(&self.draw.binv, &resid, &self.mixing, priors, &self.scales_binv, rng)?;
        let (lambda, acc_lambda) =
            steps::draw_lambda(&self.draw.lambda, &self.mixing, priors, &self.scales_lambda, rng);
        self.draw = StructuralParams::from_coefficients(&a, n, p, update.binv, lambda)?;
        Ok((update.accepted, acc_lambda))
    }
}

fn adapt(scales: &mut [f64], accepted: &[usize], window: usize, band: (f64, f64)) {
    let target = 0.5 * (band.0 + band.1);
    for (s, a) in scales.iter_mut().zip(accepted) {
        let rate = *a as f64 / window as f64;
        if rate < band.0 || rate > band.1 {
            *s *= (2.0 * (rate - target)).exp();
        }
    }
}

/// Run one chain from the least-squares starting point.
pub fn run_gibbs(layout: &RegressionLayout, priors: &PriorSet, config: &SamplerConfig) -> Result<Chain> {
    run_gibbs_stream(layout, priors, config, 0)
}

/// Run one chain on RNG stream `stream` of `config.seed`.
pub fn run_gibbs_stream(
    layout: &RegressionLayout,
    priors: &PriorSet,
    config: &SamplerConfig,
    stream: u64,
) -> Result<Chain> {
    config.validate()?;
    priors.validate(layout.n_vars(), layout.lags)?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let n = layout.n_vars();
    let mut state = SweepState::new(initial_draw(layout)?, layout.n_obs());

    let mut window_binv = vec![0usize; n];
    let mut window_lambda = vec![0usize; n];
    let mut kept_binv = vec![0usize; n];
    let mut kept_lambda = vec![0usize; n];
    let mut draws = Vec::with_capacity((config.iterations - config.burn_in) / config.thin + 1);

    for iter in 0..config.iterations {
        let (acc_b, acc_l) = state.sweep(layout, priors, &mut rng)?;
        if iter < config.burn_in {
            for i in 0..n {
                window_binv[i] += usize::from(acc_b[i]);
                window_lambda[i] += usize::from(acc_l[i]);
            }
            if (iter + 1) % config.adaptation_window == 0 {
                let w = config.adaptation_window;
                adapt(&mut state.scales_binv, &window_binv, w, config.target_acceptance);
                adapt(&mut state.scales_lambda, &window_lambda, w, config.target_acceptance);
                window_binv.iter_mut().for_each(|c| *c = 0);
                window_lambda.iter_mut().for_each(|c| *c = 0);
            }
            continue;
        }
        for i in 0..n {
            kept_binv[i] += usize::from(acc_b[i]);
            kept_lambda[i] += usize::from(acc_l[i]);
        }
        if (iter - config.burn_in) % config.thin == 0 {
            draws.push(state.draw.clone());
        }
    }

    let post = (config.iterations - config.burn_in) as f64;
    let acceptance_binv: Vec<f64> = kept_binv.iter().map(|c| *c as f64 / post).collect();
    let acceptance_lambda: Vec<f64> = kept_lambda.iter().map(|c| *c as f64 / post).collect();
    let mut warnings = Vec::new();
    for (i, r) in acceptance_binv.iter().enumerate() {
        if *r < 0.01 {
            warnings.push(format!("tuning failure: B⁻¹ row {} acceptance {:.4}", i + 1, r));
        }
    }
    for (i, r) in acceptance_lambda.iter().enumerate() {
        if *r < 0.01 {
            warnings.push(format!("tuning failure: λ_{} acceptance {:.4}", i + 1, r));
        }
    }
    let stable = draws
        .iter()
        .map(|d| model::is_stable(d, config.stability_tol))
        .collect();
    Ok(Chain {
        draws,
        stable,
        meta: ChainMeta {
            seed: config.seed,
            stream,
            burn_in: config.burn_in,
            thin: config.thin,
            total_iterations: config.iterations,
            n_vars: n,
            n_lags: layout.lags,
            acceptance_binv,
            acceptance_lambda,
            scales_binv: state.scales_binv,
            scales_lambda: state.scales_lambda,
            runtime_secs: started.elapsed().as_secs_f64(),
            warnings,
        },
    })
}

/// Independent chains on separate RNG streams, run on worker threads.
pub fn run_chains(
    layout: &RegressionLayout,
    priors: &PriorSet,
    config: &SamplerConfig,
    n_chains: usize,
) -> Result<Vec<Chain>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains as u64)
            .map(|stream| scope.spawn(move || run_gibbs_stream(layout, priors, config, stream)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sampler thread panicked"))
            .collect()
    })
}
