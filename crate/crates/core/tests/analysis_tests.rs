mod common;

use nalgebra::{DMatrix, DVector};
use tsvar::analysis::*;
use tsvar::model::{self, StructuralParams};
use tsvar::sampler::Chain;

fn fevd_model() -> StructuralParams {
    StructuralParams::new(
        DVector::zeros(2),
        vec![DMatrix::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.4])],
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.8, 1.0]).try_inverse().unwrap(),
        DVector::from_vec(vec![6.0, 10.0]),
    )
    .unwrap()
}

#[test]
fn fevd_matches_forecast_error_simulation() {
    let m = fevd_model();
    let shares = fevd_draw(&m, 8).unwrap();
    for h in [1, 4, 8] {
        let sim = common::simulated_shares(&m, h, 200_000, 800 + h as u64);
        let diff = (&shares[h - 1] - &sim).amax();
        assert!(diff < 0.01, "h={h}: {diff}");
    }
}

#[test]
fn fevd_shares_sum_to_one() {
    let mut r = common::rng(801);
    let draws: Vec<_> = (0..50).map(|_| common::random_stable(4, 2, &mut r)).collect();
    for d in &draws {
        for m in fevd_draw(d, 20).unwrap() {
            assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
            for row in m.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-8);
            }
        }
    }
    let result = fevd(&Chain::from_draws(draws), 20, DEFAULT_BAND).unwrap();
    assert_eq!(result.band.median.len(), 20);
}

#[test]
fn one_sd_irf_is_scaled_unit_irf() {
    let mut r = common::rng(802);
    for _ in 0..20 {
        let d = common::random_stable(3, 2, &mut r);
        let unit = irf_draw(&d, 12, ShockScale::Unit).unwrap();
        let sd = irf_draw(&d, 12, ShockScale::OneSd).unwrap();
        for (u, s) in unit.iter().zip(&sd) {
            for i in 0..3 {
                let f = (d.lambda[i] / (d.lambda[i] - 2.0)).sqrt();
                assert!((s.column(i) - u.column(i) * f).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn bands_are_ordered() {
    let mut r = common::rng(803);
    let chain = Chain::from_draws((0..200).map(|_| common::random_stable(2, 2, &mut r)).collect());
    let res = irf(&chain, 10, ShockScale::Unit, DEFAULT_BAND).unwrap();
    for h in 0..=10 {
        assert!(res.band.lower[h].iter().zip(res.band.median[h].iter()).all(|(a, b)| a <= b));
        assert!(res.band.median[h].iter().zip(res.band.upper[h].iter()).all(|(a, b)| a <= b));
    }
    let f = fevd(&chain, 10, DEFAULT_BAND).unwrap();
    for h in 0..10 {
        assert!(f.band.lower[h].iter().zip(f.band.upper[h].iter()).all(|(a, b)| a <= b));
    }
}

#[test]
fn unstable_draws_are_excluded() {
    let mut r = common::rng(804);
    let stable = common::random_stable(2, 1, &mut r);
    let mut explosive = stable.clone();
    explosive.lags[0] = DMatrix::from_element(2, 2, 0.0) + DMatrix::identity(2, 2) * 1.1;
    let chain = Chain::from_draws(vec![stable.clone(), explosive.clone()]);
    let res = irf(&chain, 5, ShockScale::Unit, DEFAULT_BAND).unwrap();
    assert_eq!(res.unstable_excluded, 1);
    assert_eq!(res.draws_used, 1);
    assert_eq!(res.band.median, model::ma_coefficients(&stable, 5).unwrap().theta);
    assert!(irf(&Chain::from_draws(vec![explosive]), 5, ShockScale::Unit, DEFAULT_BAND).is_err());
}

#[test]
fn historical_decomposition_is_additive() {
    let truth = common::recovery_model();
    let layout = common::simulated_layout(&truth, 150, 805);
    let mut r = common::rng(806);
    // perturbed parameter draws: residuals are whatever the data imply
    for _ in 0..30 {
        let mut d = truth.clone();
        for l in &mut d.lags {
            *l += DMatrix::from_fn(3, 3, |_, _| rand::Rng::gen_range(&mut r, -0.05..0.05));
        }
        d.binv += DMatrix::from_fn(3, 3, |_, _| rand::Rng::gen_range(&mut r, -0.1..0.1));
        let hd = hd_draw(&d, &layout).unwrap();
        assert!((hd.reconstruction() - &layout.y).amax() < 1e-6);
    }
}

#[test]
fn contributions_equal_moving_average_sums() {
    let truth = common::recovery_model();
    let layout = common::simulated_layout(&truth, 60, 807);
    let hd = hd_draw(&truth, &layout).unwrap();
    let u = &layout.y - &layout.x * truth.coefficient_matrix();
    let eps = u * truth.binv.transpose();
    let theta = model::ma_coefficients(&truth, layout.n_obs()).unwrap().theta;
    for t in 0..layout.n_obs() {
        for k in 0..3 {
            for i in 0..3 {
                let direct: f64 = (0..=t).map(|j| theta[j][(k, i)] * eps[(t - j, i)]).sum();
                assert!((hd.contributions[i][(t, k)] - direct).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn hd_modes_and_table() {
    let truth = common::recovery_model();
    let layout = common::simulated_layout(&truth, 40, 808);
    let chain = Chain::from_draws(vec![truth.clone(); 3]);
    let a = historical_decomposition(&chain, &layout, HdMode::MedianOfDraws).unwrap();
    let b = historical_decomposition(&chain, &layout, HdMode::MedianParameters).unwrap();
    assert!((a.summary.reconstruction() - b.summary.reconstruction()).amax() < 1e-9);
    let dates: Vec<String> = (1..=layout.n_obs()).map(|t| t.to_string()).collect();
    let table = hd_table(&a, &default_labels("y", 3), &default_labels("shock", 3), &dates);
    // header + variables × (observed, deterministic, initial, 3 shocks) × dates
    assert_eq!(table.lines().count(), 1 + 3 * 6 * 40);
}

#[test]
fn irf_table_layout() {
    let chain = Chain::from_draws(vec![fevd_model()]);
    let res = irf(&chain, 2, ShockScale::Unit, DEFAULT_BAND).unwrap();
    let table = irf_table(&res, &default_labels("y", 2), &default_labels("shock", 2));
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("variable,shock,horizon,stat,value"));
    assert_eq!(table.lines().count(), 1 + 3 * 2 * 2 * 3);
}
