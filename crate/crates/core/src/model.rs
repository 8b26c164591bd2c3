//! Structural VAR parameters, companion-form stability and the
//! moving-average recursion.
//!
//! The model is
//!
//! ```text
//! y_t = a0 + A_1 y_{t-1} + ... + A_p y_{t-p} + B ε_t,
//! ```
//!
//! with independent unit-scale Student-t components `ε_{i,t}` having
//! `λ_i > 2` degrees of freedom. The sampler works with `B⁻¹`, so that is
//! what the parameter container stores; `B` is derived on demand.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default margin below one for the companion spectral radius.
pub const DEFAULT_STABILITY_TOL: f64 = 1e-7;

/// Parameters of one structural VAR (one posterior draw, or a ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub a0: DVector<f64>,
    /// `A_1, ..., A_p`
    pub lags: Vec<DMatrix<f64>>,
    pub binv: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

impl StructuralParams {
    pub fn new(
        a0: DVector<f64>,
        lags: Vec<DMatrix<f64>>,
        binv: DMatrix<f64>,
        lambda: DVector<f64>,
    ) -> Result<Self> {
        let n = a0.len();
        if lags.is_empty() {
            return Err(Error::Sizing("at least one lag matrix is required".into()));
        }
        if lags.iter().any(|a| a.shape() != (n, n)) || binv.shape() != (n, n) || lambda.len() != n {
            return Err(Error::Sizing(format!(
                "inconsistent dimensions for an {n}-variable model"
            )));
        }
        if let Some(l) = lambda.iter().find(|l| !(**l > 2.0)) {
            return Err(Error::Sizing(format!(
                "degrees of freedom must exceed 2, got {l}"
            )));
        }
        if binv.determinant().abs() <= 1e-12 {
            return Err(Error::Singular("B⁻¹ is numerically singular".into()));
        }
        Ok(StructuralParams { a0, lags, binv, lambda })
    }

    /// Build from the stacked coefficient vector `a = vec(C)`, where `C` is the
    /// `(Np+1)×N` matrix whose column `k` holds equation `k`'s coefficients in
    /// [`RegressionLayout`](crate::data::RegressionLayout) column order.
    pub fn from_coefficients(
        a: &DVector<f64>,
        n: usize,
        p: usize,
        binv: DMatrix<f64>,
        lambda: DVector<f64>,
    ) -> Result<Self> {
        let k = n * p + 1;
        if a.len() != n * k {
            return Err(Error::Sizing(format!(
                "coefficient vector has length {}, expected {}",
                a.len(),
                n * k
            )));
        }
        let a0 = DVector::from_fn(n, |eq, _| a[eq * k]);
        let lags = (1..=p)
            .map(|l| DMatrix::from_fn(n, n, |eq, v| a[eq * k + 1 + (l - 1) * n + v]))
            .collect();
        StructuralParams::new(a0, lags, binv, lambda)
    }

    pub fn n_vars(&self) -> usize {
        self.a0.len()
    }

    pub fn n_lags(&self) -> usize {
        self.lags.len()
    }

    /// Stacked coefficient vector, inverse of [`Self::from_coefficients`].
    pub fn coefficient_vector(&self) -> DVector<f64> {
        let n = self.n_vars();
        let p = self.n_lags();
        let k = n * p + 1;
        DVector::from_fn(n * k, |idx, _| {
            let eq = idx / k;
            let j = idx % k;
            if j == 0 {
                self.a0[eq]
            } else {
                let l = (j - 1) / n;
                let v = (j - 1) % n;
                self.lags[l][(eq, v)]
            }
        })
    }

    /// `(Np+1)×N` coefficient matrix `C` with `Y ≈ X C`.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        let k = n * self.n_lags() + 1;
        let a = self.coefficient_vector();
        DMatrix::from_fn(k, n, |j, eq| a[eq * k + j])
    }

    /// Impact matrix `B = (B⁻¹)⁻¹`, rejected when ill-conditioned.
    pub fn impact(&self) -> Result<DMatrix<f64>> {
        linalg::guarded_inverse(&self.binv)
    }

    /// Shock variances `λ/(λ-2)` of unit-scale t components.
    pub fn shock_variances(&self) -> DVector<f64> {
        self.lambda.map(|l| l / (l - 2.0))
    }
}

/// Reduced-form (`Ψ_j`) and structural (`Θ_j = Ψ_j B`) MA coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MaCoefficients {
    pub psi: Vec<DMatrix<f64>>,
    pub theta: Vec<DMatrix<f64>>,
}

/// `Np×Np` companion matrix.
pub fn companion(params: &StructuralParams) -> DMatrix<f64> {
    let n = params.n_vars();
    let p = params.n_lags();
    let mut f = DMatrix::zeros(n * p, n * p);
    for (l, a) in params.lags.iter().enumerate() {
        f.view_mut((0, l * n), (n, n)).copy_from(a);
    }
    for i in n..n * p {
        f[(i, i - n)] = 1.0;
    }
    f
}

/// Spectral radius from the full (complex) eigendecomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Spectral radius from normalised repeated squaring of the matrix
/// (`ρ = lim ‖M^k‖^{1/k}`), independent of any eigen solver.
pub fn spectral_radius_power(m: &DMatrix<f64>) -> f64 {
    let mut current = m.clone();
    let mut log_rho = 0.0;
    let mut weight = 1.0;
    for _ in 0..60 {
        let norm = current.norm();
        if norm == 0.0 {
            return 0.0;
        }
        current /= norm;
        log_rho += weight * norm.ln();
        weight *= 0.5;
        current = &current * &current;
    }
    let norm = current.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (log_rho + weight * norm.ln()).exp()
}

/// True when the companion spectral radius is below `1 - tol`.
pub fn is_stable(params: &StructuralParams, tol: f64) -> bool {
    spectral_radius(&companion(params)) < 1.0 - tol
}

/// MA coefficients up to horizon `h` (inclusive).
///
/// `Ψ_0 = I`, `Ψ_j = Σ_{l=1}^{min(j,p)} Ψ_{j-l} A_l`, `Θ_j = Ψ_j B`.
pub fn ma_coefficients(params: &StructuralParams, h: usize) -> Result<MaCoefficients> {
    let b = params.impact()?;
    Ok(ma_coefficients_with_impact(params, &b, h))
}

pub(crate) fn ma_coefficients_with_impact(
    params: &StructuralParams,
    b: &DMatrix<f64>,
    h: usize,
) -> MaCoefficients {
    let n = params.n_vars();
    let p = params.n_lags();
    let mut psi: Vec<DMatrix<f64>> = Vec::with_capacity(h + 1);
    psi.push(DMatrix::identity(n, n));
    for j in 1..=h {
        let mut next = DMatrix::zeros(n, n);
        for l in 1..=j.min(p) {
            next += &psi[j - l] * &params.lags[l - 1];
        }
        psi.push(next);
    }
    let theta = psi.iter().map(|m| m * b).collect();
    MaCoefficients { psi, theta }
}

/// `μ = (I - Σ A_l)⁻¹ a0`.
pub fn unconditional_mean(params: &StructuralParams) -> Result<DVector<f64>> {
    let n = params.n_vars();
    let mut a1 = DMatrix::identity(n, n);
    for a in &params.lags {
        a1 -= a;
    }
    let inv = linalg::guarded_inverse(&a1)?;
    Ok(inv * &params.a0)
}
