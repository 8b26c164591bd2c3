//! Effective sample size and split-R̂ for stored chains.

use serde::{Deserialize, Serialize};

use super::gibbs::Chain;
use crate::store;

/// Per-parameter convergence summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    /// `None` when the parameter does not vary (R̂ undefined).
    pub rhat: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_draws: usize,
    pub params: Vec<ParamDiagnostics>,
    pub acceptance_binv: Vec<f64>,
    pub acceptance_lambda: Vec<f64>,
    pub unstable_draws: usize,
    pub warnings: Vec<String>,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Effective sample size using Geyer's initial monotone positive sequence.
/// Returns `n` for constant series.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
            / c0
    };
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let mut pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        sum += pair;
        prev_pair = pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / (n as f64).log10().max(1.0));
    n as f64 / tau
}

/// Split-R̂ over one or more series of equal length; `None` when the
/// within-half variance vanishes.
pub fn split_rhat(series: &[&[f64]]) -> Option<f64> {
    let mut halves: Vec<&[f64]> = Vec::new();
    for s in series {
        let h = s.len() / 2;
        if h < 2 {
            return None;
        }
        halves.push(&s[..h]);
        halves.push(&s[s.len() - h..]);
    }
    let len = halves.iter().map(|h| h.len()).min()? as f64;
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let m = stats.len() as f64;
    let within = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if !(within > 0.0) {
        return None;
    }
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let between = len / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let var_plus = (len - 1.0) / len * within + between / len;
    Some((var_plus / within).sqrt())
}

/// Diagnostics across one or more chains of the same model.
pub fn diagnostics_multi(chains: &[Chain]) -> DiagnosticsReport {
    let first = &chains[0];
    let names = store::parameter_names(first.meta.n_vars, first.meta.n_lags);
    let columns: Vec<Vec<Vec<f64>>> = chains.iter().map(store::flatten_columns).collect();
    let params = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let pooled: Vec<f64> = columns.iter().flat_map(|c| c[j].iter().copied()).collect();
            let (mean, var) = mean_var(&pooled);
            let ess = columns.iter().map(|c| effective_sample_size(&c[j])).sum();
            let refs: Vec<&[f64]> = columns.iter().map(|c| c[j].as_slice()).collect();
            let rhat = split_rhat(&refs);
            ParamDiagnostics {
                name,
                mean,
                sd: var.sqrt(),
                ess,
                degenerate: rhat.is_none(),
                rhat,
            }
        })
        .collect();
    let n = first.meta.n_vars;
    let avg = |f: fn(&Chain) -> &Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| chains.iter().map(|c| f(c).get(i).copied().unwrap_or(f64::NAN)).sum::<f64>() / chains.len() as f64)
            .collect()
    };
    DiagnosticsReport {
        n_draws: chains.iter().map(Chain::len).sum(),
        params,
        acceptance_binv: avg(|c| &c.meta.acceptance_binv),
        acceptance_lambda: avg(|c| &c.meta.acceptance_lambda),
        unstable_draws: chains.iter().map(Chain::n_unstable).sum(),
        warnings: chains.iter().flat_map(|c| c.meta.warnings.iter().cloned()).collect(),
    }
}

/// Diagnostics for a single chain.
pub fn diagnostics(chain: &Chain) -> DiagnosticsReport {
    diagnostics_multi(std::slice::from_ref(chain))
}
