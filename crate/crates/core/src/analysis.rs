//! Impulse responses, forecast-error-variance decompositions and historical
//! decompositions over a chain of structural draws.
//!
//! Unstable draws are dropped before any computation and their number is
//! reported with each result. Posterior summaries are pointwise quantiles
//! across draws.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::RegressionLayout;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, StructuralParams};
use crate::sampler::kernel::reduced_residuals;
use crate::sampler::{Chain, StructuralDraw};

/// Default credible-band mass (16th to 84th percentile).
pub const DEFAULT_BAND: f64 = 0.68;

/// Size of the impulse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShockScale {
    /// Unit-scale structural shock.
    #[default]
    Unit,
    /// One standard deviation of the shock, `√(λ/(λ-2))`.
    OneSd,
}

/// How historical-decomposition summaries are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HdMode {
    /// Pointwise median of the per-draw decompositions.
    #[default]
    MedianOfDraws,
    /// Decomposition at the element-wise median parameters.
    MedianParameters,
}

/// Pointwise posterior band; `median[h][(k, i)]` is the response of
/// variable `k` to shock `i` at horizon index `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: Vec<DMatrix<f64>>,
    pub median: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfResult {
    /// Horizons `0..=H`.
    pub band: Band,
    pub scale: ShockScale,
    pub draws_used: usize,
    pub unstable_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FevdResult {
    /// Horizons `1..=H`; index `h - 1`.
    pub band: Band,
    pub draws_used: usize,
    pub unstable_excluded: usize,
}

/// Additive split of the observed series of one draw. All matrices are
/// `T_eff × N`, aligned with the layout's response rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdDraw {
    pub deterministic: DMatrix<f64>,
    pub initial: DMatrix<f64>,
    /// One matrix per shock.
    pub contributions: Vec<DMatrix<f64>>,
}

impl HdDraw {
    /// Sum of all components.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        let mut total = &self.deterministic + &self.initial;
        for c in &self.contributions {
            total += c;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdResult {
    /// Median (or median-parameter) decomposition.
    pub summary: HdDraw,
    pub observed: DMatrix<f64>,
    pub mode: HdMode,
    pub draws_used: usize,
    pub unstable_excluded: usize,
}

fn stable_draws(chain: &Chain) -> Result<Vec<&StructuralDraw>> {
    let draws: Vec<&StructuralDraw> = chain.stable_draws().collect();
    if draws.is_empty() {
        return Err(Error::Analysis("no stable draws left after filtering".into()));
    }
    Ok(draws)
}

/// `Θ_0..Θ_H` of one draw, columns scaled per `scale`.
pub fn irf_draw(draw: &StructuralDraw, horizon: usize, scale: ShockScale) -> Result<Vec<DMatrix<f64>>> {
    let mut theta = model::ma_coefficients(draw, horizon)?.theta;
    if scale == ShockScale::OneSd {
        let sd = draw.shock_variances().map(f64::sqrt);
        for m in &mut theta {
            for (i, mut col) in m.column_iter_mut().enumerate() {
                col *= sd[i];
            }
        }
    }
    Ok(theta)
}

/// FEVD shares of one draw for horizons `1..=H`; entry `(k, i)` is the share
/// of shock `i` in variable `k`.
pub fn fevd_draw(draw: &StructuralDraw, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    let theta = model::ma_coefficients(draw, horizon.saturating_sub(1))?.theta;
    let var = draw.shock_variances();
    let n = draw.n_vars();
    let mut acc = DMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(horizon);
    for t in theta.iter().take(horizon) {
        for k in 0..n {
            for i in 0..n {
                acc[(k, i)] += t[(k, i)] * t[(k, i)] * var[i];
            }
        }
        let mut shares = acc.clone();
        for k in 0..n {
            let total: f64 = acc.row(k).sum();
            if !(total > 0.0) {
                return Err(Error::Analysis(format!(
                    "zero forecast-error variance for variable {}",
                    k + 1
                )));
            }
            shares.row_mut(k).unscale_mut(total);
        }
        out.push(shares);
    }
    Ok(out)
}

fn summarize(per_draw: &[Vec<DMatrix<f64>>], level: f64) -> Band {
    let lo = (1.0 - level) / 2.0;
    let hi = 1.0 - lo;
    let len = per_draw[0].len();
    let (r, c) = per_draw[0][0].shape();
    let mut band = Band { lower: Vec::new(), median: Vec::new(), upper: Vec::new(), level };
    let mut buf = vec![0.0; per_draw.len()];
    for h in 0..len {
        let mut lower = DMatrix::zeros(r, c);
        let mut median = DMatrix::zeros(r, c);
        let mut upper = DMatrix::zeros(r, c);
        for k in 0..r {
            for i in 0..c {
                for (b, d) in buf.iter_mut().zip(per_draw) {
                    *b = d[h][(k, i)];
                }
                lower[(k, i)] = linalg::quantile(&mut buf, lo);
                median[(k, i)] = linalg::quantile(&mut buf, 0.5);
                upper[(k, i)] = linalg::quantile(&mut buf, hi);
            }
        }
        band.lower.push(lower);
        band.median.push(median);
        band.upper.push(upper);
    }
    band
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Analysis(format!("band level {level} outside (0, 1)")))
    }
}

/// Posterior impulse responses over horizons `0..=H`.
pub fn irf(chain: &Chain, horizon: usize, scale: ShockScale, level: f64) -> Result<IrfResult> {
    check_level(level)?;
    let draws = stable_draws(chain)?;
    let per_draw: Vec<Vec<DMatrix<f64>>> =
        draws.iter().map(|d| irf_draw(d, horizon, scale)).collect::<Result<_>>()?;
    Ok(IrfResult {
        band: summarize(&per_draw, level),
        scale,
        draws_used: draws.len(),
        unstable_excluded: chain.n_unstable(),
    })
}

/// Posterior forecast-error-variance shares over horizons `1..=H`.
pub fn fevd(chain: &Chain, horizon: usize, level: f64) -> Result<FevdResult> {
    check_level(level)?;
    if horizon == 0 {
        return Err(Error::Analysis("variance decomposition needs H ≥ 1".into()));
    }
    let draws = stable_draws(chain)?;
    let per_draw: Vec<Vec<DMatrix<f64>>> = draws.iter().map(|d| fevd_draw(d, horizon)).collect::<Result<_>>()?;
    Ok(FevdResult {
        band: summarize(&per_draw, level),
        draws_used: draws.len(),
        unstable_excluded: chain.n_unstable(),
    })
}

/// Run the VAR recursion `z_t = c + Σ A_l z_{t-l} + e_t` from the given
/// presample, returning the `T_eff` rows after it.
fn recurse(params: &StructuralParams, presample: &DMatrix<f64>, c: &DVector<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let p = params.n_lags();
    let n = params.n_vars();
    let t = e.nrows();
    let mut path = DMatrix::zeros(p + t, n);
    path.rows_mut(0, p).copy_from(presample);
    for s in 0..t {
        let mut row = c.clone();
        for l in 1..=p {
            row += &params.lags[l - 1] * path.row(p + s - l).transpose();
        }
        row += e.row(s).transpose();
        path.row_mut(p + s).copy_from(&row.transpose());
    }
    path.rows(p, t).into_owned()
}

/// Historical decomposition of one draw: structural residuals are recovered
/// from the data, each shock's contribution is propagated from a zero
/// presample, the deterministic part from `a0` alone and the initial-condition
/// part from the observed presample without `a0`.
pub fn hd_draw(draw: &StructuralDraw, layout: &RegressionLayout) -> Result<HdDraw> {
    let n = draw.n_vars();
    let t = layout.n_obs();
    let b = draw.impact()?;
    let u = reduced_residuals(draw, layout);
    let eps = &u * draw.binv.transpose();
    let zero_pre = DMatrix::zeros(draw.n_lags(), n);
    let zero_c = DVector::zeros(n);
    let deterministic = recurse(draw, &zero_pre, &draw.a0, &DMatrix::zeros(t, n));
    let initial = recurse(draw, &layout.presample, &zero_c, &DMatrix::zeros(t, n));
    let contributions = (0..n)
        .map(|i| {
            // row s of the impulse is B[:, i] ε_{i,s}
            let e = DMatrix::from_fn(t, n, |s, k| b[(k, i)] * eps[(s, i)]);
            recurse(draw, &zero_pre, &zero_c, &e)
        })
        .collect();
    Ok(HdDraw { deterministic, initial, contributions })
}

fn median_parameters(draws: &[&StructuralDraw]) -> Result<StructuralDraw> {
    let flat: Vec<Vec<f64>> = draws.iter().map(|d| crate::store::flatten(d)).collect();
    let mut buf = vec![0.0; flat.len()];
    let med: Vec<f64> = (0..flat[0].len())
        .map(|j| {
            for (b, row) in buf.iter_mut().zip(&flat) {
                *b = row[j];
            }
            linalg::quantile(&mut buf, 0.5)
        })
        .collect();
    crate::store::unflatten(&med, draws[0].n_vars(), draws[0].n_lags())
}

/// Posterior historical decomposition.
pub fn historical_decomposition(chain: &Chain, layout: &RegressionLayout, mode: HdMode) -> Result<HdResult> {
    let draws = stable_draws(chain)?;
    if draws[0].n_vars() != layout.n_vars() || draws[0].n_lags() != layout.lags {
        return Err(Error::Analysis("chain and data differ in size or lag order".into()));
    }
    let summary = match mode {
        HdMode::MedianParameters => hd_draw(&median_parameters(&draws)?, layout)?,
        HdMode::MedianOfDraws => {
            let per: Vec<HdDraw> = draws.iter().map(|d| hd_draw(d, layout)).collect::<Result<_>>()?;
            let n = layout.n_vars();
            // stack components as pseudo-horizons so `summarize` can reuse them
            let stacked: Vec<Vec<DMatrix<f64>>> = per
                .into_iter()
                .map(|h| {
                    let mut v = vec![h.deterministic, h.initial];
                    v.extend(h.contributions);
                    v
                })
                .collect();
            let band = summarize(&stacked, DEFAULT_BAND);
            let mut med = band.median.into_iter();
            let deterministic = med.next().expect("deterministic");
            let initial = med.next().expect("initial");
            let contributions: Vec<DMatrix<f64>> = med.collect();
            debug_assert_eq!(contributions.len(), n);
            HdDraw { deterministic, initial, contributions }
        }
    };
    Ok(HdResult {
        summary,
        observed: layout.y.clone(),
        mode,
        draws_used: draws.len(),
        unstable_excluded: chain.n_unstable(),
    })
}

// ---------------------------------------------------------------------------
// long-format tables

/// Default labels `y1..yN` / `shock1..shockN`.
pub fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn band_table(band: &Band, first_horizon: usize, variables: &[String], shocks: &[String]) -> String {
    let mut out = String::from("variable,shock,horizon,stat,value\n");
    for (idx, med) in band.median.iter().enumerate() {
        let h = idx + first_horizon;
        for (k, var) in variables.iter().enumerate() {
            for (i, shock) in shocks.iter().enumerate() {
                for (stat, m) in [("lower", &band.lower[idx]), ("median", med), ("upper", &band.upper[idx])] {
                    let _ = writeln!(out, "{var},{shock},{h},{stat},{:e}", m[(k, i)]);
                }
            }
        }
    }
    out
}

/// Rows `(variable, shock, horizon, stat, value)` with stat in
/// `lower|median|upper`.
pub fn irf_table(result: &IrfResult, variables: &[String], shocks: &[String]) -> String {
    band_table(&result.band, 0, variables, shocks)
}

pub fn fevd_table(result: &FevdResult, variables: &[String], shocks: &[String]) -> String {
    band_table(&result.band, 1, variables, shocks)
}

/// Rows `(variable, shock, date, value)`; the shock column also carries the
/// `deterministic`, `initial` and `observed` series.
pub fn hd_table(result: &HdResult, variables: &[String], shocks: &[String], dates: &[String]) -> String {
    let mut out = String::from("variable,shock,date,value\n");
    let s = &result.summary;
    let mut series: Vec<(&str, &DMatrix<f64>)> = vec![("observed", &result.observed), ("deterministic", &s.deterministic), ("initial", &s.initial)];
    for (name, c) in shocks.iter().zip(&s.contributions) {
        series.push((name.as_str(), c));
    }
    for (k, var) in variables.iter().enumerate() {
        for (name, m) in &series {
            for (t, date) in dates.iter().enumerate() {
                let _ = writeln!(out, "{var},{name},{date},{:e}", m[(t, k)]);
            }
        }
    }
    out
}
