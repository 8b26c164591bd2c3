//! Chain persistence.
//!
//! A chain is written as a comma-separated table with one row per draw:
//!
//! ```text
//! draw,stable,a0[1],A1[1,1],...,Binv[1,1],...,lambda[1],...
//! ```
//!
//! Columns after `stable` follow the flattened order `(a, vec(B⁻¹), λ)`:
//! `a` equation by equation (`a0[k]`, then `A{l}[k,j]` for each lag block),
//! `B⁻¹` column-major, then the degrees of freedom. Indices are 1-based.
//! A JSON sidecar `<stem>.meta.json` carries the format version, column
//! names and sampler metadata.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StructuralParams;
use crate::sampler::{Chain, ChainMeta, StructuralDraw};

pub const FORMAT_NAME: &str = "tsvar-chain";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub format: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub meta: ChainMeta,
}

/// Column names of the flattened parameter vector.
pub fn parameter_names(n: usize, p: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(n * (n * p + 1) + n * n + n);
    for eq in 1..=n {
        names.push(format!("a0[{eq}]"));
        for l in 1..=p {
            for v in 1..=n {
                names.push(format!("A{l}[{eq},{v}]"));
            }
        }
    }
    for c in 1..=n {
        for r in 1..=n {
            names.push(format!("Binv[{r},{c}]"));
        }
    }
    for i in 1..=n {
        names.push(format!("lambda[{i}]"));
    }
    names
}

/// Flattened `(a, vec(B⁻¹), λ)`.
pub fn flatten(draw: &StructuralDraw) -> Vec<f64> {
    let mut out: Vec<f64> = draw.coefficient_vector().iter().copied().collect();
    out.extend(draw.binv.iter());
    out.extend(draw.lambda.iter());
    out
}

pub fn unflatten(values: &[f64], n: usize, p: usize) -> Result<StructuralDraw> {
    let k = n * p + 1;
    let expected = n * k + n * n + n;
    if values.len() != expected {
        return Err(Error::Store(format!(
            "row has {} values, expected {expected}",
            values.len()
        )));
    }
    let a = DVector::from_column_slice(&values[..n * k]);
    let binv = DMatrix::from_column_slice(n, n, &values[n * k..n * k + n * n]);
    let lambda = DVector::from_column_slice(&values[n * k + n * n..]);
    StructuralParams::from_coefficients(&a, n, p, binv, lambda)
}

/// One vector per parameter, in [`parameter_names`] order.
pub fn flatten_columns(chain: &Chain) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = chain.draws.iter().map(flatten).collect();
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

pub fn sidecar_path(chain_path: &Path) -> PathBuf {
    let stem = chain_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "chain".into());
    chain_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    let names = parameter_names(chain.meta.n_vars, chain.meta.n_lags);
    let mut out = String::new();
    out.push_str("draw,stable");
    for name in &names {
        out.push(',');
        out.push('"');
        out.push_str(name);
        out.push('"');
    }
    out.push('\n');
    for (idx, (draw, stable)) in chain.draws.iter().zip(&chain.stable).enumerate() {
        out.push_str(&format!("{idx},{}", u8::from(*stable)));
        for v in flatten(draw) {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;

    let sidecar = ChainSidecar {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        columns: names,
        meta: chain.meta.clone(),
    };
    let meta_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Store(e.to_string()))?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn read_chain(path: &Path) -> Result<Chain> {
    let meta_path = sidecar_path(path);
    let json = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: ChainSidecar = serde_json::from_str(&json).map_err(|e| Error::Store(e.to_string()))?;
    if sidecar.format != FORMAT_NAME || sidecar.version != FORMAT_VERSION {
        return Err(Error::Store(format!(
            "unsupported chain format {} v{}",
            sidecar.format, sidecar.version
        )));
    }
    let n = sidecar.meta.n_vars;
    let p = sidecar.meta.n_lags;
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Store(e.to_string()))?;
    let mut draws = Vec::new();
    let mut stable = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Store(e.to_string()))?;
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Store(format!("row {}: cannot parse `{s}`", i + 2)))
        };
        stable.push(record.get(1) == Some("1"));
        let values: Vec<f64> = record.iter().skip(2).map(parse).collect::<Result<_>>()?;
        draws.push(unflatten(&values, n, p)?);
    }
    if draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    Ok(Chain { draws, stable, meta: sidecar.meta })
}
