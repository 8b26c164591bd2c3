#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsvar::data::RegressionLayout;
use tsvar::model::StructuralParams;
use tsvar::sampler::Chain;
use tsvar::simulate;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable VAR(2) with three t-distributed shocks (λ = 4, 5, 8).
pub fn recovery_model() -> StructuralParams {
    let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.5, 1.0, 0.2, -0.3, 0.4, 1.0]);
    StructuralParams::new(
        DVector::from_vec(vec![0.2, -0.1, 0.1]),
        vec![
            DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.4, 0.1, 0.1, 0.0, 0.3]),
            DMatrix::from_row_slice(3, 3, &[0.1, 0.0, 0.0, 0.0, -0.1, 0.0, 0.05, 0.0, 0.1]),
        ],
        b.try_inverse().unwrap(),
        DVector::from_vec(vec![4.0, 5.0, 8.0]),
    )
    .unwrap()
}

pub fn simulated_layout(params: &StructuralParams, t: usize, seed: u64) -> RegressionLayout {
    let mut r = rng(seed);
    let (y, _) = simulate::simulate(params, t + params.n_lags(), 500, &mut r).unwrap();
    let names = (1..=params.n_vars()).map(|i| format!("y{i}")).collect();
    RegressionLayout::from_observations(&y, params.n_lags(), names, Vec::new())
}

/// Random stable model with spectral radius bounded by shrinking the lags.
pub fn random_stable(n: usize, p: usize, r: &mut ChaCha8Rng) -> StructuralParams {
    use rand::Rng;
    loop {
        let lags: Vec<DMatrix<f64>> = (0..p)
            .map(|_| DMatrix::from_fn(n, n, |_, _| r.gen_range(-0.5..0.5) / (n * p) as f64 * 2.0))
            .collect();
        let binv = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + r.gen_range(-0.4..0.4));
        let lambda = DVector::from_fn(n, |_, _| r.gen_range(2.5..15.0));
        let a0 = DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
        if let Ok(m) = StructuralParams::new(a0, lags, binv, lambda) {
            if tsvar::model::is_stable(&m, 1e-7) {
                return m;
            }
        }
    }
}

/// Θ_j read off powers of the companion matrix: J Fʲ Jᵀ B.
pub fn companion_power_theta(m: &StructuralParams, h: usize) -> Vec<DMatrix<f64>> {
    let n = m.n_vars();
    let p = m.n_lags();
    let mut f = DMatrix::zeros(n * p, n * p);
    for (l, a) in m.lags.iter().enumerate() {
        f.view_mut((0, l * n), (n, n)).copy_from(a);
    }
    for i in n..n * p {
        f[(i, i - n)] = 1.0;
    }
    let b = m.binv.clone().try_inverse().unwrap();
    let mut power = DMatrix::identity(n * p, n * p);
    let mut out = Vec::new();
    for _ in 0..=h {
        out.push(power.view((0, 0), (n, n)) * &b);
        power = &f * power;
    }
    out
}

/// h-step forecast-error variance shares from simulated shock paths: each
/// shock is switched on alone from a zero state, so the value after `h`
/// steps is its contribution to the forecast error.
pub fn simulated_shares(m: &StructuralParams, h: usize, reps: usize, seed: u64) -> DMatrix<f64> {
    let n = m.n_vars();
    let b = m.impact().unwrap();
    let mut r = rng(seed);
    let mut var = DMatrix::zeros(n, n);
    for _ in 0..reps {
        let eps = simulate::structural_shocks(&m.lambda, h, &mut r);
        for i in 0..n {
            let only = DMatrix::from_fn(h, n, |t, j| if j == i { eps[(t, j)] } else { 0.0 });
            let y = simulate::propagate(m, &b, &DMatrix::zeros(m.n_lags(), n), &only);
            for k in 0..n {
                var[(k, i)] += y[(y.nrows() - 1, k)].powi(2);
            }
        }
    }
    for k in 0..n {
        let total: f64 = var.row(k).sum();
        var.row_mut(k).unscale_mut(total);
    }
    var
}

/// Independent tally: invert each B⁻¹ by its own LU and test every ordered
/// pair directly from the sign definitions.
pub fn brute_force(chain: &Chain, s1: &[f64], s2: &[f64]) -> DMatrix<usize> {
    let n = s1.len();
    let mut counts = DMatrix::zeros(n, n);
    for d in &chain.draws {
        let b = d.binv.clone().lu().try_inverse().unwrap();
        let inside = |c: usize, s: &[f64]| (0..n).all(|r| s[r] == 0.0 || s[r] * b[(r, c)] >= 0.0);
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                let mut ok = inside(i, s1) && inside(k, s2);
                for m in 0..n {
                    if m != i && m != k && (inside(m, s1) || inside(m, s2)) {
                        ok = false;
                    }
                }
                if ok {
                    counts[(i, k)] += 1;
                }
            }
        }
    }
    counts
}

