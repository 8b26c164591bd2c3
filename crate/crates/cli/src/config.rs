//! Run configuration read from a TOML file.
//!
//! Every table rejects unknown keys. Command-line flags override file values;
//! file values override the built-in defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tsvar::analysis::{HdMode, ShockScale, DEFAULT_BAND};
use tsvar::data::{Quarter, Transform, TransformSpec};
use tsvar::labeling::{ConstraintMatrix, ConstraintSet, DEFAULT_THRESHOLD, MIN_PRIOR_DRAWS};
use tsvar::priors::LambdaSupport;
use tsvar::sampler::{GewekeConfig, GewekeModel, Mutation, SamplerConfig};

/// Invalid or inconsistent configuration (exit status 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory, relative to the config file.
    pub out: Option<PathBuf>,
    #[serde(default = "one")]
    pub chains: usize,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub lags: LagConfig,
    #[serde(default)]
    pub prior: PriorOverrides,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub labeling: Option<LabelingConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub geweke: GewekeSection,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Transform applied to columns without their own entry.
    pub transform: Option<Transform>,
    #[serde(default)]
    pub transforms: BTreeMap<String, Transform>,
}

impl DataConfig {
    pub fn spec(&self, names: &[String]) -> TransformSpec {
        let mut spec = TransformSpec::default();
        for name in names {
            if let Some(t) = self.transforms.get(name).copied().or(self.transform) {
                spec = spec.with(name, t);
            }
        }
        for (name, t) in &self.transforms {
            spec = spec.with(name, *t);
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum LagConfig {
    Fixed(usize),
    Aic(usize),
}

impl Default for LagConfig {
    fn default() -> Self {
        LagConfig::Aic(10)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    pub fn expand(&self, n: usize, what: &str) -> anyhow::Result<Vec<f64>> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; n]),
            ScalarOrList::List(v) if v.len() == n => Ok(v.clone()),
            ScalarOrList::List(v) => Err(bad(format!("{what} has {} entries for {n} variables", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub kappa3: Option<f64>,
    pub kappa4: Option<f64>,
    pub first_lag_mean: Option<ScalarOrList>,
    pub b_sd: Option<f64>,
    pub lambda_mean: Option<ScalarOrList>,
    pub lambda_support: Option<LambdaSupport>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignPattern {
    pub name: String,
    /// One character per variable: `+`, `-` or `0`.
    pub signs: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingConfig {
    pub first: SignPattern,
    pub second: SignPattern,
    #[serde(default = "impact_only")]
    pub horizons: Vec<usize>,
    /// Variable whose impact response is normalised to be non-positive;
    /// defaults to the first column. `"none"` disables the normalisation.
    pub normalize: Option<String>,
    #[serde(default = "default_prior_draws")]
    pub prior_draws: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn impact_only() -> Vec<usize> {
    vec![0]
}

fn default_prior_draws() -> usize {
    1_000_000
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl LabelingConfig {
    pub fn constraint_set(&self, n: usize) -> anyhow::Result<ConstraintSet> {
        let build = |p: &SignPattern| -> anyhow::Result<ConstraintMatrix> {
            if p.signs.chars().count() != n {
                return Err(bad(format!(
                    "sign pattern `{}` for `{}` needs {n} entries",
                    p.signs, p.name
                )));
            }
            ConstraintMatrix::from_pattern(&p.name, &p.signs).map_err(|e| bad(e.to_string()))
        };
        ConstraintSet::new(build(&self.first)?, build(&self.second)?, self.horizons.clone())
            .map_err(|e| bad(e.to_string()))
    }

    pub fn normalize_index(&self, names: &[String]) -> anyhow::Result<Option<usize>> {
        match self.normalize.as_deref() {
            None => Ok(Some(0)),
            Some("none") => Ok(None),
            Some(name) => names
                .iter()
                .position(|n| n == name)
                .map(Some)
                .ok_or_else(|| bad(format!("normalisation variable `{name}` is not in the data"))),
        }
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.prior_draws < MIN_PRIOR_DRAWS {
            return Err(bad(format!("labeling.prior_draws must be at least {MIN_PRIOR_DRAWS}")));
        }
        if !(self.threshold > 0.0) {
            return Err(bad("labeling.threshold must be positive"));
        }
        if self.horizons.is_empty() {
            return Err(bad("labeling.horizons must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub horizon: usize,
    pub band: f64,
    pub shock_scale: ShockScale,
    pub hd_mode: HdMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            horizon: 20,
            band: DEFAULT_BAND,
            shock_scale: ShockScale::Unit,
            hd_mode: HdMode::MedianOfDraws,
        }
    }
}

/// Ground truth for synthetic data: `impact` is `B` given row by row, `lags`
/// one `N×N` matrix per lag, also row by row.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub observations: usize,
    #[serde(default = "default_burn")]
    pub burn_in: usize,
    #[serde(default = "default_start")]
    pub start: String,
    pub names: Option<Vec<String>>,
    pub intercept: Vec<f64>,
    #[serde(default)]
    pub lags: Vec<Vec<Vec<f64>>>,
    pub impact: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
}

fn default_burn() -> usize {
    500
}

fn default_start() -> String {
    "1960Q1".into()
}

impl SimulateConfig {
    pub fn start_quarter(&self) -> anyhow::Result<Quarter> {
        self.start.parse().map_err(|_| bad(format!("simulate.start `{}` is not a quarter", self.start)))
    }

    pub fn names(&self) -> Vec<String> {
        self.names
            .clone()
            .unwrap_or_else(|| (1..=self.intercept.len()).map(|i| format!("y{i}")).collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GewekeSection {
    pub n_vars: usize,
    pub lags: usize,
    pub observations: usize,
    pub iterations: usize,
    pub burn_in: usize,
    /// Multiplier on the coefficient-draw noise; anything but 1 breaks the
    /// sampler on purpose.
    pub coefficient_noise: Option<f64>,
}

impl Default for GewekeSection {
    fn default() -> Self {
        let cfg = GewekeConfig::default();
        GewekeSection {
            n_vars: 2,
            lags: 1,
            observations: 12,
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            coefficient_noise: None,
        }
    }
}

impl GewekeSection {
    pub fn model(&self) -> GewekeModel {
        GewekeModel { n_vars: self.n_vars, lags: self.lags, t_obs: self.observations }
    }

    pub fn config(&self) -> GewekeConfig {
        GewekeConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            mutation: self.coefficient_noise.map(Mutation::CoefficientNoiseScale),
            ..GewekeConfig::default()
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub out: Option<PathBuf>,
    pub paper_scale: bool,
}

/// Parsed configuration with paths resolved and overrides applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub out: PathBuf,
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
}

impl Resolved {
    pub fn data(&self) -> anyhow::Result<&DataConfig> {
        self.config.data.as_ref().ok_or_else(|| bad("missing [data] table"))
    }

    pub fn data_path(&self) -> anyhow::Result<PathBuf> {
        Ok(self.base.join(&self.data()?.path))
    }

    pub fn labeling(&self) -> anyhow::Result<&LabelingConfig> {
        self.config.labeling.as_ref().ok_or_else(|| bad("missing [labeling] table"))
    }

    pub fn simulate(&self) -> anyhow::Result<&SimulateConfig> {
        self.config.simulate.as_ref().ok_or_else(|| bad("missing [simulate] table"))
    }
}

pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    toml::from_str(text).map_err(|e| bad(e.to_string()))
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Resolved> {
    let (mut config, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (parse(&text)?, base)
        }
        None => (RunConfig { chains: 1, ..RunConfig::default() }, PathBuf::new()),
    };
    if overrides.paper_scale {
        let seed = config.sampler.seed;
        config.sampler = SamplerConfig { seed, ..SamplerConfig::paper_scale() };
    }
    if let Some(seed) = overrides.seed {
        config.sampler.seed = seed;
    }
    if let Some(chains) = overrides.chains {
        config.chains = chains;
    }
    let out = match (&overrides.out, &config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("out"),
    };
    validate(&config)?;
    Ok(Resolved { config, out, base })
}

fn validate(c: &RunConfig) -> anyhow::Result<()> {
    if c.chains == 0 {
        return Err(bad("chains must be at least 1"));
    }
    c.sampler.validate().map_err(|e| bad(e.to_string()))?;
    match c.lags {
        LagConfig::Fixed(0) | LagConfig::Aic(0) => return Err(bad("lag order must be at least 1")),
        _ => {}
    }
    if let Some(l) = &c.labeling {
        l.validate()?;
    }
    if !(c.analysis.band > 0.0 && c.analysis.band < 1.0) {
        return Err(bad("analysis.band must lie in (0, 1)"));
    }
    let p = &c.prior;
    for (name, v) in [("kappa1", p.kappa1), ("kappa2", p.kappa2), ("kappa3", p.kappa3), ("kappa4", p.kappa4), ("b_sd", p.b_sd)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("prior.{name} must be positive")));
            }
        }
    }
    if let Some(s) = &c.simulate {
        let n = s.intercept.len();
        if n == 0 || s.impact.len() != n || s.impact.iter().any(|r| r.len() != n) || s.lambda.len() != n {
            return Err(bad("simulate: intercept, impact rows and lambda must all have N entries"));
        }
        if s.lags.iter().any(|m| m.len() != n || m.iter().any(|r| r.len() != n)) {
            return Err(bad("simulate: every lag matrix must be N×N"));
        }
        if s.lags.is_empty() {
            return Err(bad("simulate: at least one lag matrix is required"));
        }
        if s.observations <= s.lags.len() {
            return Err(bad("simulate: too few observations"));
        }
        if s.names().len() != n {
            return Err(bad("simulate: names must have N entries"));
        }
        s.start_quarter()?;
    }
    Ok(())
}
