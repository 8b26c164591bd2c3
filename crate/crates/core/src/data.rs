//! Quarterly panel ingestion, per-variable transforms, the lagged regression
//! layout and AIC lag selection.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Option<Self> {
        (1..=4).contains(&quarter).then_some(Quarter { year, quarter })
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Quarter { year: self.year + 1, quarter: 1 }
        } else {
            Quarter { year: self.year, quarter: self.quarter + 1 }
        }
    }

    pub fn prev(self) -> Self {
        if self.quarter == 1 {
            Quarter { year: self.year - 1, quarter: 4 }
        } else {
            Quarter { year: self.year, quarter: self.quarter - 1 }
        }
    }

    /// `n` consecutive quarters starting at `self`.
    pub fn range(self, n: usize) -> Vec<Quarter> {
        std::iter::successors(Some(self), |q| Some(q.next())).take(n).collect()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl FromStr for Quarter {
    type Err = String;

    /// Accepts `YYYYQn` (also `YYYY-Qn`, `YYYYqn`) or an ISO date on the first
    /// day of a quarter (`YYYY-01-01`, `YYYY-04-01`, ...).
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(pos) = s.find(['Q', 'q']) {
            let year = s[..pos].trim_end_matches('-');
            let quarter = &s[pos + 1..];
            let year: i32 = year.parse().map_err(|_| format!("bad year in `{s}`"))?;
            let quarter: u8 = quarter.parse().map_err(|_| format!("bad quarter in `{s}`"))?;
            return Quarter::new(year, quarter).ok_or_else(|| format!("quarter out of range in `{s}`"));
        }
        let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| format!("unrecognised date `{s}`"))?;
        if date.day() != 1 || (date.month() - 1) % 3 != 0 {
            return Err(format!("`{s}` is not the first day of a quarter"));
        }
        Ok(Quarter {
            year: date.year(),
            quarter: ((date.month() - 1) / 3 + 1) as u8,
        })
    }
}

/// How a raw series is converted into model units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    /// `100 * (ln x_t - ln x_{t-1})`
    LogDiff100,
    /// `x_t - x_{t-1}`
    FirstDifference,
    Level,
}

impl Transform {
    pub fn is_difference(self) -> bool {
        !matches!(self, Transform::Level)
    }

    /// Transformed series; difference tags shorten the series by one.
    pub fn apply(self, raw: &[f64]) -> Vec<f64> {
        match self {
            Transform::Level => raw.to_vec(),
            Transform::FirstDifference => raw.windows(2).map(|w| w[1] - w[0]).collect(),
            Transform::LogDiff100 => raw
                .windows(2)
                .map(|w| 100.0 * (w[1].ln() - w[0].ln()))
                .collect(),
        }
    }

    /// Rebuild raw levels from a transformed series and the observation that
    /// the differencing dropped (ignored for `Level`).
    pub fn invert(self, first: f64, transformed: &[f64]) -> Vec<f64> {
        match self {
            Transform::Level => transformed.to_vec(),
            Transform::FirstDifference => {
                let mut out = Vec::with_capacity(transformed.len() + 1);
                out.push(first);
                let mut acc = first;
                for d in transformed {
                    acc += d;
                    out.push(acc);
                }
                out
            }
            Transform::LogDiff100 => {
                let mut out = Vec::with_capacity(transformed.len() + 1);
                out.push(first);
                let mut log_acc = first.ln();
                for d in transformed {
                    log_acc += d / 100.0;
                    out.push(log_acc.exp());
                }
                out
            }
        }
    }
}

/// One transform tag per variable, keyed by column name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformSpec(pub BTreeMap<String, Transform>);

impl TransformSpec {
    pub fn uniform<S: AsRef<str>>(names: &[S], transform: Transform) -> Self {
        TransformSpec(
            names
                .iter()
                .map(|n| (n.as_ref().to_string(), transform))
                .collect(),
        )
    }

    pub fn with(mut self, name: &str, transform: Transform) -> Self {
        self.0.insert(name.to_string(), transform);
        self
    }

    pub fn get(&self, name: &str) -> Option<Transform> {
        self.0.get(name).copied()
    }
}

/// Dated `T×N` observation matrix in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    pub dates: Vec<Quarter>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl TimeSeriesPanel {
    pub fn new(dates: Vec<Quarter>, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != names.len() {
            return Err(Error::Sizing(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.nrows() != dates.len() {
            return Err(Error::Sizing(format!(
                "{} dates for {} rows",
                dates.len(),
                values.nrows()
            )));
        }
        for w in dates.windows(2) {
            if w[1] != w[0].next() {
                return Err(Error::Frequency {
                    previous: w[0].to_string(),
                    next: w[1].to_string(),
                });
            }
        }
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let row = idx % values.nrows();
            let col = idx / values.nrows();
            return Err(Error::Parse {
                row,
                column: names[col].clone(),
                message: format!("non-finite value {v}"),
            });
        }
        Ok(TimeSeriesPanel { dates, names, values })
    }

    /// Panel from raw levels, applying `spec` and trimming undefined rows.
    pub fn from_raw(
        dates: Vec<Quarter>,
        names: Vec<String>,
        raw: &DMatrix<f64>,
        spec: &TransformSpec,
    ) -> Result<Self> {
        let transforms = resolve_spec(&names, spec)?;
        let drop = usize::from(transforms.iter().any(|t| t.is_difference()));
        let t_raw = raw.nrows();
        if t_raw <= drop {
            return Err(Error::Sizing("too few observations to difference".into()));
        }
        let mut values = DMatrix::zeros(t_raw - drop, names.len());
        for (j, tr) in transforms.iter().enumerate() {
            let col: Vec<f64> = raw.column(j).iter().copied().collect();
            if *tr == Transform::LogDiff100 {
                if let Some(i) = col.iter().position(|v| *v <= 0.0) {
                    return Err(Error::Parse {
                        row: i,
                        column: names[j].clone(),
                        message: "log transform needs positive values".into(),
                    });
                }
            }
            let out = tr.apply(&col);
            let skip = out.len() - (t_raw - drop);
            for (i, v) in out.iter().skip(skip).enumerate() {
                values[(i, j)] = *v;
            }
        }
        TimeSeriesPanel::new(dates[drop..].to_vec(), names, values)
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// Reorder variables; `order[j]` is the source column of output column `j`.
    pub fn permute(&self, order: &[usize]) -> Self {
        let values = DMatrix::from_fn(self.n_obs(), order.len(), |i, j| self.values[(i, order[j])]);
        TimeSeriesPanel {
            dates: self.dates.clone(),
            names: order.iter().map(|&j| self.names[j].clone()).collect(),
            values,
        }
    }
}

fn resolve_spec(names: &[String], spec: &TransformSpec) -> Result<Vec<Transform>> {
    for key in spec.0.keys() {
        if !names.contains(key) {
            return Err(Error::Parse {
                row: 0,
                column: key.clone(),
                message: "transform given for a column that is not in the file".into(),
            });
        }
    }
    names
        .iter()
        .map(|n| {
            spec.get(n).ok_or_else(|| Error::Parse {
                row: 0,
                column: n.clone(),
                message: "no transform specified for this column".into(),
            })
        })
        .collect()
}

/// Read a delimited (comma or tab) table: header row, date in the first
/// column, raw levels in the rest. Row numbers in errors are 1-based file
/// lines.
pub fn load_panel(path: impl AsRef<Path>, spec: &TransformSpec) -> Result<TimeSeriesPanel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_panel(&text, spec)
}

pub fn parse_panel(text: &str, spec: &TransformSpec) -> Result<TimeSeriesPanel> {
    let header = text.lines().next().unwrap_or_default();
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        row: 1,
        column: String::new(),
        message: e.to_string(),
    })?;
    if headers.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: String::new(),
            message: "need a date column and at least one series".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let date_name = headers.get(0).unwrap_or("date").to_string();

    let mut dates = Vec::new();
    let mut raw = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != names.len() + 1 {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", names.len() + 1, record.len()),
            });
        }
        let date: Quarter = record[0].parse().map_err(|message| Error::Parse {
            row: line,
            column: date_name.clone(),
            message,
        })?;
        dates.push(date);
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                column: names[j].clone(),
                message: if field.is_empty() {
                    "missing value".into()
                } else {
                    format!("cannot parse `{field}` as a number")
                },
            })?;
            raw.push(v);
        }
    }
    for w in dates.windows(2) {
        if w[1] != w[0].next() {
            return Err(Error::Frequency {
                previous: w[0].to_string(),
                next: w[1].to_string(),
            });
        }
    }
    let raw = DMatrix::from_row_slice(dates.len(), names.len(), &raw);
    TimeSeriesPanel::from_raw(dates, names, &raw, spec)
}

/// Response and design matrices for a VAR(p).
///
/// Row `r` corresponds to observation `t = p + r`. Design columns are
/// `[1, y_{t-1}', y_{t-2}', ..., y_{t-p}']`, i.e. the constant first and then
/// one block of all `N` variables per lag. Column `1 + (l-1)N + j` holds
/// variable `j` at lag `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionLayout {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    /// The first `p` observations, used as initial conditions.
    pub presample: DMatrix<f64>,
    pub dates: Vec<Quarter>,
    pub names: Vec<String>,
    pub lags: usize,
}

impl RegressionLayout {
    pub fn n_vars(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.y.nrows()
    }

    /// Regressors per equation, `N p + 1`.
    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    /// Design column index of variable `var` at lag `lag` (1-based lag).
    pub fn lag_column(&self, lag: usize, var: usize) -> usize {
        1 + (lag - 1) * self.n_vars() + var
    }

    /// Full `T×N` observation matrix (presample followed by responses).
    pub fn observations(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        let p = self.lags;
        DMatrix::from_fn(p + self.n_obs(), n, |i, j| {
            if i < p {
                self.presample[(i, j)]
            } else {
                self.y[(i - p, j)]
            }
        })
    }

    /// Layout with identical regressors but a different response matrix.
    /// Used when data are resimulated on a fixed presample.
    pub fn from_observations(values: &DMatrix<f64>, lags: usize, names: Vec<String>, dates: Vec<Quarter>) -> Self {
        layout_from(values, lags, lags, names, dates)
    }
}

fn layout_from(
    values: &DMatrix<f64>,
    lags: usize,
    start: usize,
    names: Vec<String>,
    dates: Vec<Quarter>,
) -> RegressionLayout {
    let t = values.nrows();
    let n = values.ncols();
    let rows = t - start;
    let k = n * lags + 1;
    let y = values.rows(start, rows).into_owned();
    let x = DMatrix::from_fn(rows, k, |r, c| {
        if c == 0 {
            1.0
        } else {
            let lag = (c - 1) / n + 1;
            let var = (c - 1) % n;
            values[(start + r - lag, var)]
        }
    });
    let presample = values.rows(start - lags, lags).into_owned();
    let dates = if dates.len() == t { dates[start..].to_vec() } else { dates };
    RegressionLayout { y, x, presample, dates, names, lags }
}

/// Build the VAR(p) regression layout for `panel`.
pub fn build_layout(panel: &TimeSeriesPanel, p: usize) -> Result<RegressionLayout> {
    let t = panel.n_obs();
    let n = panel.n_vars();
    if p == 0 {
        return Err(Error::Sizing("lag count must be at least 1".into()));
    }
    if p + n + 1 > t || t <= n * p + 1 {
        return Err(Error::Sizing(format!(
            "{p} lags is too many for {t} observations of {n} variables"
        )));
    }
    Ok(layout_from(
        &panel.values,
        p,
        p,
        panel.names.clone(),
        panel.dates.clone(),
    ))
}

/// Gaussian AIC of a VAR(p) fitted on the common sample starting at `p_max`.
pub fn aic_values(panel: &TimeSeriesPanel, p_max: usize) -> Result<Vec<f64>> {
    let t = panel.n_obs();
    let n = panel.n_vars();
    if p_max == 0 {
        return Err(Error::Sizing("maximum lag must be at least 1".into()));
    }
    if t <= p_max + n * p_max + 1 {
        return Err(Error::Sizing(format!(
            "{t} observations cannot support a maximum lag of {p_max}"
        )));
    }
    let t_eff = (t - p_max) as f64;
    (1..=p_max)
        .map(|p| {
            let layout = layout_from(&panel.values, p, p_max, panel.names.clone(), Vec::new());
            let coef = linalg::least_squares(&layout.x, &layout.y)?;
            let resid = &layout.y - &layout.x * coef;
            let sigma = linalg::residual_covariance(&resid);
            let log_det = linalg::log_abs_det(&sigma)
                .filter(|_| sigma.determinant() > 0.0)
                .ok_or_else(|| {
                    Error::DegenerateData(format!("singular residual covariance at lag {p}"))
                })?;
            let n = n as f64;
            Ok(log_det + 2.0 * (n * n * p as f64 + n) / t_eff)
        })
        .collect()
}

/// Index (1-based lag) of the smallest value; ties go to the smaller lag.
pub fn argmin_lag(aic: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in aic.iter().enumerate() {
        if *v < aic[best] {
            best = i;
        }
    }
    best + 1
}

/// Lag length minimising the Gaussian AIC over `1..=p_max`.
pub fn select_lag_aic(panel: &TimeSeriesPanel, p_max: usize) -> Result<usize> {
    Ok(argmin_lag(&aic_values(panel, p_max)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Quarter {
        s.parse().unwrap()
    }

    #[test]
    fn parses_both_date_styles() {
        assert_eq!(q("1980Q1"), Quarter { year: 1980, quarter: 1 });
        assert_eq!(q("2011-Q4"), Quarter { year: 2011, quarter: 4 });
        assert_eq!(q("1980-07-01"), Quarter { year: 1980, quarter: 3 });
        assert!("1980-02-01".parse::<Quarter>().is_err());
        assert!("1980Q5".parse::<Quarter>().is_err());
    }

    #[test]
    fn log_difference_times_100() {
        let out = Transform::LogDiff100.apply(&[100.0, 102.0]);
        assert_eq!(out.len(), 1);
        assert!((out[0] - 1.980_262_729_617_973).abs() < 1e-12);
    }

    #[test]
    fn level_is_identity() {
        assert_eq!(Transform::Level.apply(&[5.0, 4.5]), vec![5.0, 4.5]);
    }

    #[test]
    fn layout_scalar_example() {
        let panel = TimeSeriesPanel::new(
            q("2000Q1").range(5),
            vec!["y".into()],
            DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]),
        )
        .unwrap();
        let l = build_layout(&panel, 1).unwrap();
        assert_eq!(l.y.as_slice(), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!(l.x.column(0).as_slice(), &[1.0; 4]);
        assert_eq!(l.x.column(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
        let l2 = build_layout(&panel, 2).unwrap();
        assert_eq!(l2.n_obs(), 3);
        assert_eq!(l2.dates[0], q("2000Q3"));
        assert_eq!(l2.observations(), panel.values);
    }

    #[test]
    fn layout_rejects_too_many_lags() {
        let panel = TimeSeriesPanel::new(
            q("2000Q1").range(5),
            vec!["a".into(), "b".into()],
            DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64),
        )
        .unwrap();
        assert!(matches!(build_layout(&panel, 3), Err(Error::Sizing(_))));
        assert!(matches!(build_layout(&panel, 0), Err(Error::Sizing(_))));
    }

    #[test]
    fn ties_resolve_to_smaller_lag() {
        assert_eq!(argmin_lag(&[1.0, 0.5, 0.5, 0.7]), 2);
        assert_eq!(argmin_lag(&[0.3, 0.3]), 1);
    }

    #[test]
    fn load_reports_row_and_column() {
        let spec = TransformSpec::uniform(&["a", "b"], Transform::Level);
        let err = parse_panel("date,a,b\n1980Q1,1,2\n1980Q2,x,3\n", &spec).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_panel("date,a,b\n1980Q1,1,2\n1980Q2,,3\n", &spec).unwrap_err();
        assert!(err.to_string().contains("missing value"));
    }

    #[test]
    fn load_detects_gaps() {
        let spec = TransformSpec::uniform(&["a", "b"], Transform::Level);
        let err = parse_panel("date,a,b\n1980Q1,1,2\n1980Q3,1,3\n", &spec).unwrap_err();
        assert!(matches!(err, Error::Frequency { .. }));
    }

    #[test]
    fn load_applies_mixed_transforms() {
        let spec = TransformSpec::default()
            .with("gdp", Transform::LogDiff100)
            .with("rate", Transform::Level);
        let panel = parse_panel(
            "date\tgdp\trate\n1980-01-01\t100\t5.0\n1980-04-01\t102\t4.5\n1980-07-01\t103\t4.0\n",
            &spec,
        )
        .unwrap();
        assert_eq!(panel.n_obs(), 2);
        assert_eq!(panel.dates[0], q("1980Q2"));
        assert!((panel.values[(0, 0)] - 100.0 * 1.02_f64.ln()).abs() < 1e-12);
        assert_eq!(panel.values[(0, 1)], 4.5);
        assert_eq!(panel.values[(1, 1)], 4.0);
    }

    #[test]
    fn spec_must_cover_every_column() {
        let spec = TransformSpec::default().with("a", Transform::Level);
        assert!(parse_panel("date,a,b\n1980Q1,1,2\n", &spec).is_err());
        let spec = TransformSpec::uniform(&["a", "b", "c"], Transform::Level);
        assert!(parse_panel("date,a,b\n1980Q1,1,2\n", &spec).is_err());
    }
}
