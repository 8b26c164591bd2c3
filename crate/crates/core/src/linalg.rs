//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest condition number accepted when inverting structural matrices.
pub const MAX_CONDITION: f64 = 1e12;

/// Least-squares coefficients `C` minimising `||Y - X C||` (QR based).
pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() < x.ncols() {
        return Err(Error::Sizing(format!(
            "least squares needs at least {} rows, got {}",
            x.ncols(),
            x.nrows()
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diag_min = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if diag_max == 0.0 || diag_min <= diag_max * 1e-13 {
        return Err(Error::DegenerateData(
            "regressor matrix is rank deficient".into(),
        ));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::DegenerateData("triangular solve failed".into()))
}

/// Condition number in the 2-norm.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse with a determinant and condition-number guard.
pub fn guarded_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.determinant().abs() <= 1e-12 {
        return Err(Error::Singular("matrix is numerically singular".into()));
    }
    let cond = condition_number(m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Conditioning(cond));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("matrix inversion failed".into()))
}

/// `log |det m|` via LU; `None` when the matrix is exactly singular.
pub fn log_abs_det(m: &DMatrix<f64>) -> Option<f64> {
    let d = m.clone().lu().determinant();
    if d == 0.0 || !d.is_finite() {
        None
    } else {
        Some(d.abs().ln())
    }
}

/// Sample covariance `UᵀU / n` of the rows of `u`.
pub fn residual_covariance(u: &DMatrix<f64>) -> DMatrix<f64> {
    u.transpose() * u / u.nrows() as f64
}

pub fn column(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.column(j).into_owned()
}

/// Linear-interpolated quantile (type 7) of an unsorted slice.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}
