//! Simulation of structural VARs with independent unit-scale t shocks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{self, StructuralParams};

/// One unit-scale Student-t draw through its normal / gamma scale mixture.
pub fn student_t<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    let w: f64 = Gamma::new(0.5 * lambda, 2.0 / lambda)
        .expect("positive degrees of freedom")
        .sample(rng);
    let z: f64 = StandardNormal.sample(rng);
    z / w.sqrt()
}

/// `T×N` matrix of independent unit-scale t shocks, column `i` with `λ_i`.
pub fn structural_shocks<R: Rng + ?Sized>(lambda: &DVector<f64>, t: usize, rng: &mut R) -> DMatrix<f64> {
    let mut eps = DMatrix::zeros(t, lambda.len());
    for r in 0..t {
        for i in 0..lambda.len() {
            eps[(r, i)] = student_t(lambda[i], rng);
        }
    }
    eps
}

/// Observations generated from a given presample and shock sequence.
///
/// Returns the `(p + T)×N` matrix whose first `p` rows are `presample`.
pub fn propagate(
    params: &StructuralParams,
    b: &DMatrix<f64>,
    presample: &DMatrix<f64>,
    shocks: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = params.n_vars();
    let p = params.n_lags();
    let t = shocks.nrows();
    let mut y = DMatrix::zeros(p + t, n);
    y.rows_mut(0, p).copy_from(presample);
    for r in 0..t {
        let mut row = params.a0.clone();
        for (l, a) in params.lags.iter().enumerate() {
            row += a * y.row(p + r - l - 1).transpose();
        }
        row += b * shocks.row(r).transpose();
        y.row_mut(p + r).copy_from(&row.transpose());
    }
    y
}

/// Simulate `t` observations after a burn-in started at the unconditional
/// mean. Returns `(observations, shocks)`; the shocks are the `t` structural
/// innovations that generated the returned rows beyond the first `p`.
///
/// Unstable parameter sets are refused.
pub fn simulate<R: Rng + ?Sized>(
    params: &StructuralParams,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !model::is_stable(params, model::DEFAULT_STABILITY_TOL) {
        return Err(Error::Sizing("refusing to simulate an unstable VAR".into()));
    }
    let p = params.n_lags();
    if t <= p {
        return Err(Error::Sizing(format!("need more than {p} observations")));
    }
    let b = params.impact()?;
    let mu = model::unconditional_mean(params)?;
    let presample = DMatrix::from_fn(p, params.n_vars(), |_, j| mu[j]);
    let shocks = structural_shocks(&params.lambda, burn_in + t - p, rng);
    let y = propagate(params, &b, &presample, &shocks);
    let keep = y.rows(burn_in, t).into_owned();
    let shocks = shocks.rows(burn_in, t - p).into_owned();
    Ok((keep, shocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn propagate_reproduces_recursion() {
        let params = StructuralParams::new(
            DVector::from_element(1, 1.0),
            vec![DMatrix::from_element(1, 1, 0.5)],
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 5.0),
        )
        .unwrap();
        let b = params.impact().unwrap();
        let shocks = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]);
        let y = propagate(&params, &b, &DMatrix::from_element(1, 1, 2.0), &shocks);
        assert_eq!(y.as_slice(), &[2.0, 4.0, 3.0, 0.5]);
    }

    #[test]
    fn refuses_unstable() {
        let params = StructuralParams::new(
            DVector::zeros(1),
            vec![DMatrix::from_element(1, 1, 1.2)],
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 5.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(simulate(&params, 50, 10, &mut rng).is_err());
    }
}
