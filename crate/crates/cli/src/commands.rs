//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tsvar::analysis::{self, default_labels};
use tsvar::data::{self, RegressionLayout, TimeSeriesPanel};
use tsvar::labeling::{self, Canonicalization, Decision, LabelingResult};
use tsvar::model::{self, StructuralParams};
use tsvar::priors::{self, MinnesotaConfig, PriorSet};
use tsvar::sampler::{self, geweke, Chain};
use tsvar::{simulate, store};

use crate::config::{ConfigError, LagConfig, Resolved};
use crate::output::Outputs;

pub const LABELED_CHAIN: &str = "chain_labeled.csv";
pub const LABELING_JSON: &str = "labeling.json";

fn chain_name(k: usize) -> String {
    format!("chain_{k}.csv")
}

fn header_names(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| tsvar::Error::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    let sep = if first.contains('\t') { '\t' } else { ',' };
    Ok(first.split(sep).skip(1).map(|s| s.trim().trim_matches('"').to_string()).collect())
}

fn load_data(cfg: &Resolved) -> anyhow::Result<TimeSeriesPanel> {
    let path = cfg.data_path()?;
    let names = header_names(&path)?;
    let spec = cfg.data()?.spec(&names);
    Ok(data::load_panel(&path, &spec)?)
}

#[derive(Debug, Serialize)]
struct LagChoice {
    lags: usize,
    aic: Option<Vec<f64>>,
}

fn choose_lags(cfg: &Resolved, panel: &TimeSeriesPanel) -> anyhow::Result<LagChoice> {
    Ok(match cfg.config.lags {
        LagConfig::Fixed(p) => LagChoice { lags: p, aic: None },
        LagConfig::Aic(p_max) => {
            let aic = data::aic_values(panel, p_max)?;
            LagChoice { lags: data::argmin_lag(&aic), aic: Some(aic) }
        }
    })
}

fn build_priors(cfg: &Resolved, panel: &TimeSeriesPanel, p: usize) -> anyhow::Result<PriorSet> {
    let n = panel.n_vars();
    let o = &cfg.config.prior;
    let mut m = MinnesotaConfig::with_scales(priors::estimate_sigma(panel, p)?);
    m.kappa1 = o.kappa1.unwrap_or(m.kappa1);
    m.kappa2 = o.kappa2.unwrap_or(m.kappa2);
    m.kappa3 = o.kappa3.unwrap_or(m.kappa3);
    m.kappa4 = o.kappa4.unwrap_or(m.kappa4);
    if let Some(f) = &o.first_lag_mean {
        m.first_lag_mean = DVector::from_vec(f.expand(n, "prior.first_lag_mean")?);
    }
    m.validate().map_err(|e| ConfigError(e.to_string()))?;
    let mut set = priors::default_priors(&m, n, p);
    if let Some(sd) = o.b_sd {
        set.b_sd = sd;
    }
    if let Some(l) = &o.lambda_mean {
        set.lambda_mean = DVector::from_vec(l.expand(n, "prior.lambda_mean")?);
    }
    if let Some(s) = o.lambda_support {
        set.lambda_support = s;
    }
    set.validate(n, p).map_err(|e| ConfigError(e.to_string()))?;
    Ok(set)
}

/// Everything the sampler, labeling and analysis need from the data.
struct Model {
    panel: TimeSeriesPanel,
    lags: LagChoice,
    layout: RegressionLayout,
    priors: PriorSet,
}

fn prepare_model(cfg: &Resolved, fixed_lags: Option<usize>) -> anyhow::Result<Model> {
    let panel = load_data(cfg)?;
    if let Some(l) = &cfg.config.labeling {
        l.constraint_set(panel.n_vars())?;
        l.normalize_index(&panel.names)?;
    }
    let lags = match fixed_lags {
        Some(p) => LagChoice { lags: p, aic: None },
        None => choose_lags(cfg, &panel)?,
    };
    let layout = data::build_layout(&panel, lags.lags)?;
    let priors = build_priors(cfg, &panel, lags.lags)?;
    Ok(Model { panel, lags, layout, priors })
}

#[derive(Debug, Serialize)]
struct FitSummary {
    variables: Vec<String>,
    first_date: String,
    last_date: String,
    observations: usize,
    lag_selection: LagChoice,
    chains: Vec<String>,
    priors: PriorSet,
    sampler: sampler::SamplerConfig,
}

pub fn fit(cfg: &Resolved) -> anyhow::Result<String> {
    let model = prepare_model(cfg, None)?;
    let chains = sampler::run_chains(&model.layout, &model.priors, &cfg.config.sampler, cfg.config.chains)?;
    let report = sampler::diagnostics_multi(&chains);

    let mut out = Outputs::new(&cfg.out, "fit");
    out.prepare_dir()?;
    let mut names = Vec::new();
    for (k, chain) in chains.iter().enumerate() {
        let name = chain_name(k + 1);
        store::write_chain(&out.path(&name), chain)?;
        out.external(&name);
        out.external(&format!("chain_{}.meta.json", k + 1));
        names.push(name);
    }
    out.add_json("diagnostics.json", &report)?;
    let summary = FitSummary {
        variables: model.panel.names.clone(),
        first_date: model.panel.dates.first().map(ToString::to_string).unwrap_or_default(),
        last_date: model.panel.dates.last().map(ToString::to_string).unwrap_or_default(),
        observations: model.layout.n_obs(),
        lag_selection: model.lags,
        chains: names,
        priors: model.priors,
        sampler: cfg.config.sampler.clone(),
    };
    out.add_json("fit.json", &summary)?;
    out.finish()?;

    let mut msg = format!(
        "fit: {} chain(s) × {} draws, VAR({}), {} unstable draw(s)",
        chains.len(),
        chains[0].len(),
        summary.lag_selection.lags,
        report.unstable_draws
    );
    for w in &report.warnings {
        let _ = write!(msg, "\nwarning: {w}");
    }
    Ok(msg)
}

fn read_chains(paths: &[PathBuf]) -> anyhow::Result<Chain> {
    let mut merged: Option<Chain> = None;
    for p in paths {
        let c = store::read_chain(p).with_context(|| format!("reading chain {}", p.display()))?;
        match &mut merged {
            None => merged = Some(c),
            Some(m) => {
                if m.meta.n_vars != c.meta.n_vars || m.meta.n_lags != c.meta.n_lags {
                    anyhow::bail!("chains {} differ in model size", p.display());
                }
                m.draws.extend(c.draws);
                m.stable.extend(c.stable);
            }
        }
    }
    merged.ok_or_else(|| anyhow::anyhow!("no chain files given"))
}

fn default_chain_paths(cfg: &Resolved) -> Vec<PathBuf> {
    (1..=cfg.config.chains).map(|k| cfg.out.join(chain_name(k))).collect()
}

fn pair_label(i: usize, k: usize) -> String {
    format!("{},{}", i + 1, k + 1)
}

/// Bayes factors laid out with first-constraint shocks as rows and
/// second-constraint shocks as columns.
fn bayes_factor_grid(result: &LabelingResult) -> String {
    let n = result.n_vars;
    let mut s = String::from("first\\second");
    for k in 1..=n {
        let _ = write!(s, ",{k}");
    }
    s.push('\n');
    for i in 0..n {
        let _ = write!(s, "{}", i + 1);
        for k in 0..n {
            if i == k {
                s.push(',');
            } else {
                match result.bayes_factor(i, k) {
                    Some(v) => {
                        let _ = write!(s, ",{v:.4}");
                    }
                    None => s.push_str(",undefined"),
                }
            }
        }
        s.push('\n');
    }
    s
}

fn pair_table(result: &LabelingResult, post: &labeling::PairTally, prior: &labeling::PairTally) -> String {
    let mut s = String::from("first_shock,second_shock,posterior,posterior_se,prior,prior_se,bayes_factor\n");
    for (i, k) in post.pairs() {
        let bf = result.bayes_factor(i, k).map_or("undefined".to_string(), |v| format!("{v:e}"));
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:e},{:e},{bf}",
            i + 1,
            k + 1,
            post.probability(i, k),
            post.std_error(i, k),
            prior.probability(i, k),
            prior.std_error(i, k)
        );
    }
    s
}

pub fn label(cfg: &Resolved, chain_paths: &[PathBuf]) -> anyhow::Result<String> {
    let lab = cfg.labeling()?.clone();
    let paths = if chain_paths.is_empty() { default_chain_paths(cfg) } else { chain_paths.to_vec() };
    let chain = read_chains(&paths)?;
    let model = prepare_model(cfg, Some(chain.meta.n_lags))?;
    if model.panel.n_vars() != chain.meta.n_vars {
        return Err(ConfigError(format!(
            "chain has {} variables, data have {}",
            chain.meta.n_vars,
            model.panel.n_vars()
        ))
        .into());
    }
    let set = lab.constraint_set(chain.meta.n_vars)?;
    let opts = Canonicalization { reference: None, normalize_var: lab.normalize_index(&model.panel.names)? };

    let prepared = labeling::prepare_chain(&chain, &opts)?;
    let post = labeling::pair_posterior_probs(&prepared, &set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.config.sampler.seed);
    rng.set_stream(u64::MAX);
    let prior = labeling::pair_prior_probs(&model.priors, chain.meta.n_lags, &set, opts.normalize_var, lab.prior_draws, &mut rng)?;
    let result = labeling::bayes_factors(&post.probabilities(), &prior.probabilities(), lab.threshold);

    let mut out = Outputs::new(&cfg.out, "label");
    out.prepare_dir()?;
    store::write_chain(&out.path(LABELED_CHAIN), &prepared)?;
    out.external(LABELED_CHAIN);
    out.external("chain_labeled.meta.json");
    out.add("bayes_factors.csv", bayes_factor_grid(&result));
    out.add("labeling_pairs.csv", pair_table(&result, &post, &prior));
    out.add_json(LABELING_JSON, &result)?;
    out.finish()?;

    let decision = match &result.decision {
        Decision::Unsupported => "no pair supported".to_string(),
        Decision::Selected { pair, bayes_factor, .. } => format!(
            "selected pair ({}) with Bayes factor {bayes_factor:.2}",
            pair_label(pair.0, pair.1)
        ),
        Decision::Ambiguous { best, second, ratio } => format!(
            "ambiguous: ({}) vs ({}) ratio {ratio:.2}",
            pair_label(best.0, best.1),
            pair_label(second.0, second.1)
        ),
    };
    let mut msg = format!("label: {decision}");
    for (i, k) in &result.undefined {
        let _ = write!(msg, "\nwarning: Bayes factor for ({}) undefined (zero prior probability)", pair_label(*i, *k));
    }
    Ok(msg)
}

fn shock_names(cfg: &Resolved, n: usize) -> Vec<String> {
    let mut names = default_labels("shock", n);
    let Ok(lab) = cfg.labeling() else {
        return names;
    };
    let Ok(text) = std::fs::read_to_string(cfg.out.join(LABELING_JSON)) else {
        return names;
    };
    if let Ok(result) = serde_json::from_str::<LabelingResult>(&text) {
        if let Some((i, k)) = result.selected() {
            names[i] = lab.first.name.clone();
            names[k] = lab.second.name.clone();
        }
    }
    names
}

#[derive(Debug, Serialize)]
struct AnalysisSummary {
    chain: Vec<String>,
    horizon: usize,
    band: f64,
    shock_scale: analysis::ShockScale,
    hd_mode: analysis::HdMode,
    draws_used: usize,
    unstable_excluded: usize,
    shocks: Vec<String>,
    variables: Vec<String>,
}

pub fn analyze(cfg: &Resolved, chain_paths: &[PathBuf]) -> anyhow::Result<String> {
    let paths = if !chain_paths.is_empty() {
        chain_paths.to_vec()
    } else if cfg.out.join(LABELED_CHAIN).exists() {
        vec![cfg.out.join(LABELED_CHAIN)]
    } else {
        default_chain_paths(cfg)
    };
    let chain = read_chains(&paths)?;
    let model = prepare_model(cfg, Some(chain.meta.n_lags))?;
    let a = &cfg.config.analysis;
    let irf = analysis::irf(&chain, a.horizon, a.shock_scale, a.band)?;
    let fevd = analysis::fevd(&chain, a.horizon.max(1), a.band)?;
    let hd = analysis::historical_decomposition(&chain, &model.layout, a.hd_mode)?;

    let vars = model.panel.names.clone();
    let shocks = shock_names(cfg, vars.len());
    let dates: Vec<String> = if model.layout.dates.len() == model.layout.n_obs() {
        model.layout.dates.iter().map(ToString::to_string).collect()
    } else {
        (1..=model.layout.n_obs()).map(|t| t.to_string()).collect()
    };
    let mut out = Outputs::new(&cfg.out, "analyze");
    out.add("irf.csv", analysis::irf_table(&irf, &vars, &shocks));
    out.add("fevd.csv", analysis::fevd_table(&fevd, &vars, &shocks));
    out.add("hd.csv", analysis::hd_table(&hd, &vars, &shocks, &dates));
    out.add_json(
        "analysis.json",
        &AnalysisSummary {
            chain: paths.iter().map(|p| p.display().to_string()).collect(),
            horizon: a.horizon,
            band: a.band,
            shock_scale: a.shock_scale,
            hd_mode: a.hd_mode,
            draws_used: irf.draws_used,
            unstable_excluded: irf.unstable_excluded,
            shocks,
            variables: vars,
        },
    )?;
    out.finish()?;
    Ok(format!(
        "analyze: {} draws used, {} unstable excluded",
        irf.draws_used, irf.unstable_excluded
    ))
}

#[derive(Debug, Serialize)]
struct Truth {
    names: Vec<String>,
    start: String,
    seed: u64,
    burn_in: usize,
    params: StructuralParams,
    impact: DMatrix<f64>,
}

pub fn simulate(cfg: &Resolved) -> anyhow::Result<String> {
    let s = cfg.simulate()?;
    let n = s.intercept.len();
    let rows = |m: &Vec<Vec<f64>>| DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let impact = rows(&s.impact);
    let binv = impact
        .clone()
        .try_inverse()
        .ok_or_else(|| ConfigError("simulate.impact is singular".into()))?;
    let params = StructuralParams::new(
        DVector::from_vec(s.intercept.clone()),
        s.lags.iter().map(rows).collect(),
        binv,
        DVector::from_vec(s.lambda.clone()),
    )
    .map_err(|e| ConfigError(e.to_string()))?;
    if !model::is_stable(&params, model::DEFAULT_STABILITY_TOL) {
        return Err(ConfigError("simulate: refusing to simulate an unstable VAR".into()).into());
    }
    let start = s.start_quarter()?;
    let names = s.names();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.config.sampler.seed);
    let (y, shocks) = simulate::simulate(&params, s.observations, s.burn_in, &mut rng)?;

    let dates = start.range(y.nrows());
    let mut panel = format!("date,{}\n", names.join(","));
    for (t, d) in dates.iter().enumerate() {
        let _ = write!(panel, "{d}");
        for j in 0..n {
            let _ = write!(panel, ",{}", y[(t, j)]);
        }
        panel.push('\n');
    }
    let mut eps = format!("date,{}\n", names.join(","));
    for t in 0..shocks.nrows() {
        let _ = write!(eps, "{}", dates[t + params.n_lags()]);
        for j in 0..n {
            let _ = write!(eps, ",{}", shocks[(t, j)]);
        }
        eps.push('\n');
    }
    let mut out = Outputs::new(&cfg.out, "simulate");
    out.add("panel.csv", panel);
    out.add("shocks.csv", eps);
    out.add_json(
        "truth.json",
        &Truth {
            names,
            start: start.to_string(),
            seed: cfg.config.sampler.seed,
            burn_in: s.burn_in,
            params,
            impact,
        },
    )?;
    out.finish()?;
    Ok(format!("simulate: {} observations of {n} variables", y.nrows()))
}

/// Returns the summary and whether the test passed.
pub fn geweke(cfg: &Resolved) -> anyhow::Result<(String, bool)> {
    let g = &cfg.config.geweke;
    let model = g.model();
    let priors = geweke::geweke_priors(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.config.sampler.seed);
    let report = geweke::geweke_joint_test(&model, &priors, &g.config(), &mut rng)
        .map_err(|e| ConfigError(e.to_string()))?;
    if let Some(e) = &report.error {
        return Err(ConfigError(e.clone()).into());
    }
    let mut table = String::from("statistic,marginal_mean,successive_mean,z\n");
    for s in &report.stats {
        let _ = writeln!(table, "\"{}\",{:e},{:e},{:e}", s.name, s.marginal_mean, s.successive_mean, s.z);
    }
    let mut out = Outputs::new(&cfg.out, "geweke");
    out.add("geweke.csv", table);
    out.finish()?;
    let passed = report.passes();
    Ok((
        format!(
            "geweke: {:.1}% of {} statistics with |z| < 3 (max {:.2}): {}",
            100.0 * report.share_within(3.0),
            report.stats.len(),
            report.max_abs_z(),
            if passed { "pass" } else { "FAIL" }
        ),
        passed,
    ))
}
