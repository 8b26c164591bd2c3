//! Joint-distribution ("getting it right") test of the Gibbs sampler.
//!
//! Two simulators target the joint distribution of parameters and data:
//!
//! * marginal-conditional: parameters from the prior, then data given the
//!   parameters, independently each time;
//! * successive-conditional: one full sampler sweep given the current data,
//!   then fresh data given the new parameters, repeated.
//!
//! If every conditional update leaves the posterior invariant, both produce
//! the same distribution and the moments of tracked statistics agree.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::RegressionLayout;
use crate::error::{Error, Result};
use crate::model::StructuralParams;
use crate::priors::PriorSet;
use crate::simulate;
use crate::store;

use super::diagnostics::effective_sample_size;
use super::gibbs::SweepState;

/// Deliberate sampler defects used to check that the test has power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mutation {
    /// Scale the random part of the coefficient draw, i.e. use the wrong
    /// conditional precision.
    CoefficientNoiseScale(f64),
}

/// Size of the test model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GewekeModel {
    pub n_vars: usize,
    pub lags: usize,
    /// Observations after the (zero) presample.
    pub t_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    /// Draws taken by each simulator.
    pub iterations: usize,
    /// Successive-conditional sweeps discarded at the start.
    pub burn_in: usize,
    pub binv_scale: f64,
    pub lambda_scale: f64,
    pub mutation: Option<Mutation>,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        GewekeConfig {
            iterations: 100_000,
            burn_in: 1_000,
            binv_scale: 1.0,
            lambda_scale: 1.0,
            mutation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
    /// Set when the test could not run.
    pub error: Option<String>,
}

impl GewekeReport {
    /// Share of statistics with `|z| < bound`.
    pub fn share_within(&self, bound: f64) -> f64 {
        if self.stats.is_empty() {
            return 0.0;
        }
        self.stats.iter().filter(|s| s.z.abs() < bound).count() as f64 / self.stats.len() as f64
    }

    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    /// At least 95% of the z-scores inside (-3, 3).
    pub fn passes(&self) -> bool {
        self.error.is_none() && self.share_within(3.0) >= 0.95
    }
}

/// Prior suited to the test: proper, centred on a stable model with
/// `B⁻¹ ≈ I`, so simulated data stay well scaled.
pub fn geweke_priors(model: &GewekeModel) -> PriorSet {
    let n = model.n_vars;
    let k = n * model.lags + 1;
    let mut b_mean = DVector::zeros(n * n);
    for i in 0..n {
        b_mean[i * n + i] = 1.0;
    }
    PriorSet {
        a_mean: DVector::zeros(n * k),
        a_var: DVector::from_fn(n * k, |i, _| if i % k == 0 { 0.25 } else { 0.04 }),
        b_mean,
        b_sd: 0.25,
        lambda_mean: DVector::from_element(n, 10.0),
        lambda_support: crate::priors::LambdaSupport::Shift,
    }
}

fn prior_draw<R: Rng + ?Sized>(priors: &PriorSet, model: &GewekeModel, rng: &mut R) -> StructuralParams {
    let n = model.n_vars;
    let p = model.lags;
    let a = DVector::from_fn(priors.a_mean.len(), |i, _| {
        priors.a_mean[i] + priors.a_var[i].sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let binv = DMatrix::from_fn(n, n, |r, c| {
        priors.b_mean[c * n + r] + priors.b_sd * rng.sample::<f64, _>(StandardNormal)
    });
    let lambda = DVector::from_fn(n, |i, _| {
        2.0 + Exp::new(1.0 / priors.lambda_excess_mean(i))
            .expect("positive rate")
            .sample(rng)
    });
    let mut draw = StructuralParams::from_coefficients(&a, n, p, DMatrix::identity(n, n), lambda)
        .expect("prior draw dimensions");
    draw.binv = binv;
    draw
}

fn simulate_data<R: Rng + ?Sized>(
    params: &StructuralParams,
    model: &GewekeModel,
    rng: &mut R,
) -> Option<RegressionLayout> {
    let b = params.binv.clone().try_inverse()?;
    let presample = DMatrix::zeros(model.lags, model.n_vars);
    let shocks = simulate::structural_shocks(&params.lambda, model.t_obs, rng);
    let y = simulate::propagate(params, &b, &presample, &shocks);
    if y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(RegressionLayout::from_observations(
        &y,
        model.lags,
        (1..=model.n_vars).map(|i| format!("y{i}")).collect(),
        Vec::new(),
    ))
}

fn statistics(params: &StructuralParams, layout: &RegressionLayout) -> Vec<f64> {
    let mut g = store::flatten(params);
    let len = g.len();
    for j in 0..len {
        g.push(g[j] * g[j]);
    }
    // one data statistic per variable
    for c in layout.y.column_iter() {
        g.push(c.mean());
    }
    g
}

fn statistic_names(model: &GewekeModel) -> Vec<String> {
    let base = store::parameter_names(model.n_vars, model.lags);
    let mut names = base.clone();
    names.extend(base.iter().map(|n| format!("{n}^2")));
    names.extend((1..=model.n_vars).map(|i| format!("mean(y{i})")));
    names
}

/// Run both simulators and compare the means of each tracked statistic
/// (parameters, their squares and the data means).
pub fn geweke_joint_test<R: Rng + ?Sized>(
    model: &GewekeModel,
    priors: &PriorSet,
    config: &GewekeConfig,
    rng: &mut R,
) -> Result<GewekeReport> {
    if model.n_vars == 0 || model.n_vars > 2 || model.t_obs > 20 || model.lags == 0 {
        return Err(Error::SamplerConfig(
            "the joint-distribution test is meant for N ≤ 2, T ≤ 20".into(),
        ));
    }
    priors.validate(model.n_vars, model.lags)?;
    if config.iterations == 0 {
        return Ok(GewekeReport {
            stats: Vec::new(),
            error: Some("zero iterations requested".into()),
        });
    }

    let names = statistic_names(model);
    let mut marginal: Vec<Vec<f64>> = vec![Vec::with_capacity(config.iterations); names.len()];
    let mut produced = 0;
    while produced < config.iterations {
        let params = prior_draw(priors, model, rng);
        let Some(layout) = simulate_data(&params, model, rng) else {
            continue;
        };
        for (col, v) in marginal.iter_mut().zip(statistics(&params, &layout)) {
            col.push(v);
        }
        produced += 1;
    }

    let mut successive: Vec<Vec<f64>> = vec![Vec::with_capacity(config.iterations); names.len()];
    let mut params = prior_draw(priors, model, rng);
    let mut layout = loop {
        if let Some(l) = simulate_data(&params, model, rng) {
            break l;
        }
        params = prior_draw(priors, model, rng);
    };
    let mut state = SweepState::new(params, layout.n_obs());
    state.scales_binv = vec![config.binv_scale; model.n_vars];
    state.scales_lambda = vec![config.lambda_scale; model.n_vars];
    if let Some(Mutation::CoefficientNoiseScale(s)) = config.mutation {
        state.a_noise_scale = s;
    }
    for iter in 0..config.burn_in + config.iterations {
        state.sweep(&layout, priors, rng)?;
        layout = simulate_data(&state.draw, model, rng).ok_or(Error::Numeric {
            term: "simulated data",
            value: f64::NAN,
        })?;
        if iter >= config.burn_in {
            for (col, v) in successive.iter_mut().zip(statistics(&state.draw, &layout)) {
                col.push(v);
            }
        }
    }

    let stats = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let (m1, v1) = moments(&marginal[j]);
            let (m2, v2) = moments(&successive[j]);
            let ess = effective_sample_size(&successive[j]).max(1.0);
            let se = (v1 / marginal[j].len() as f64 + v2 / ess).sqrt();
            GewekeStat {
                name,
                marginal_mean: m1,
                successive_mean: m2,
                z: (m1 - m2) / se,
            }
        })
        .collect();
    Ok(GewekeReport { stats, error: None })
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
