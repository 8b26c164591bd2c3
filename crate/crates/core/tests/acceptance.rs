//! Acceptance run: one PASS / FAIL / BLOCKED line per criterion.
//!
//! Criteria 1 and 2 need the five-variable quarterly dataset used in the
//! original study. Point `TSVAR_REPLICATION_DATA` at a delimited file of the
//! already transformed series (date column first, real GDP growth second) to
//! run them; otherwise they report BLOCKED.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use tsvar::analysis::{fevd_draw, hd_draw};
use tsvar::data::{build_layout, load_panel, select_lag_aic, Transform, TransformSpec};
use tsvar::labeling::{self, bayes_factors, canonicalize, ConstraintMatrix, ConstraintSet, Decision};
use tsvar::model;
use tsvar::priors::{default_priors, estimate_sigma, MinnesotaConfig};
use tsvar::sampler::{geweke, run_gibbs, Chain, SamplerConfig};
use tsvar::simulate;
use tsvar::store;

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn replication_path() -> Option<PathBuf> {
    std::env::var_os("TSVAR_REPLICATION_DATA").map(PathBuf::from).filter(|p| p.exists())
}

fn replication_panel() -> Option<tsvar::data::TimeSeriesPanel> {
    let path = replication_path()?;
    let header = std::fs::read_to_string(&path).ok()?;
    let first = header.lines().next()?;
    let sep = if first.contains('\t') { '\t' } else { ',' };
    let names: Vec<String> = first.split(sep).skip(1).map(|s| s.trim().trim_matches('"').to_string()).collect();
    load_panel(&path, &TransformSpec::uniform(&names, Transform::Level)).ok()
}

fn criterion_1() -> Outcome {
    let Some(panel) = replication_panel() else {
        return Outcome::Blocked("replication dataset not available (set TSVAR_REPLICATION_DATA)".into());
    };
    match select_lag_aic(&panel, 10) {
        Ok(p) => check(p == 2, format!("AIC lag with p_max=10: {p}")),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn criterion_2() -> Outcome {
    let Some(panel) = replication_panel() else {
        return Outcome::Blocked("replication dataset not available (set TSVAR_REPLICATION_DATA)".into());
    };
    let run = || -> tsvar::Result<Vec<f64>> {
        let layout = build_layout(&panel, 2)?;
        let sigma = estimate_sigma(&panel, 2)?;
        let priors = default_priors(&MinnesotaConfig::with_scales(sigma), panel.n_vars(), 2);
        let chain = run_gibbs(&layout, &priors, &SamplerConfig::desk())?;
        Ok((0..panel.n_vars())
            .map(|i| chain.draws.iter().map(|d| d.lambda[i]).sum::<f64>() / chain.len() as f64)
            .collect())
    };
    match run() {
        Ok(means) => {
            let ok = means.iter().all(|m| (2.0..=20.0).contains(m)) && means.iter().any(|m| *m < 5.0);
            check(ok, format!("posterior means of λ: {means:.2?}"))
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

/// Runs the recovery experiment; returns the outcome and one fitted chain
/// with its data for reuse.
fn criterion_3() -> (Outcome, Option<(Chain, tsvar::data::RegressionLayout)>) {
    let started = Instant::now();
    let truth = common::recovery_model();
    let b_true = truth.impact().unwrap();
    let sigma = DVector::from_element(3, 1.0);
    let priors = default_priors(&MinnesotaConfig::with_scales(sigma), 3, 2);
    let mut covered = 0;
    let mut keep = None;
    let mut worst = 0.0f64;
    for rep in 0..20u64 {
        let layout = common::simulated_layout(&truth, 400, 3000 + rep);
        let cfg = SamplerConfig { iterations: 30_000, burn_in: 10_000, thin: 5, seed: 100 + rep, ..SamplerConfig::desk() };
        let chain = match run_gibbs(&layout, &priors, &cfg) {
            Ok(c) => c,
            Err(e) => return (Outcome::Fail(format!("replication {rep}: {e}")), None),
        };
        let impacts: Vec<DMatrix<f64>> = chain
            .draws
            .iter()
            .map(|d| canonicalize(d, &truth).unwrap().impact().unwrap())
            .collect();
        let mut all_in = true;
        for r in 0..3 {
            for c in 0..3 {
                let mut v: Vec<f64> = impacts.iter().map(|b| b[(r, c)]).collect();
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
                let median = tsvar::linalg::quantile(&mut v, 0.5);
                let z = (median - b_true[(r, c)]).abs() / sd;
                worst = worst.max(z);
                all_in &= z <= 3.0;
            }
        }
        covered += usize::from(all_in);
        if keep.is_none() {
            keep = Some((chain, layout));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let ok = covered >= 19 && secs <= 900.0;
    (
        check(ok, format!("{covered}/20 replications with every B element within 3 sd (largest |z| {worst:.2}), {secs:.0}s")),
        keep,
    )
}

fn criterion_4() -> Outcome {
    let model = geweke::GewekeModel { n_vars: 2, lags: 1, t_obs: 12 };
    let priors = geweke::geweke_priors(&model);
    let cfg = geweke::GewekeConfig::default();
    let clean = geweke::geweke_joint_test(&model, &priors, &cfg, &mut common::rng(41));
    let broken_cfg = geweke::GewekeConfig { mutation: Some(geweke::Mutation::CoefficientNoiseScale(1.5)), ..cfg };
    let broken = geweke::geweke_joint_test(&model, &priors, &broken_cfg, &mut common::rng(42));
    match (clean, broken) {
        (Ok(c), Ok(b)) => check(
            c.passes() && !b.passes(),
            format!(
                "correct sampler {:.0}% of |z| < 3 (max {:.2}); mutated a-step {:.0}% (max {:.2})",
                100.0 * c.share_within(3.0),
                c.max_abs_z(),
                100.0 * b.share_within(3.0),
                b.max_abs_z()
            ),
        ),
        (Err(e), _) | (_, Err(e)) => Outcome::Fail(e.to_string()),
    }
}

fn criterion_5() -> Outcome {
    let mut r = common::rng(51);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let m = common::random_stable(2 + i % 3, 1 + i % 3, &mut r);
        let ma = model::ma_coefficients(&m, 40).unwrap();
        for (a, b) in ma.theta.iter().zip(common::companion_power_theta(&m, 40)) {
            worst = worst.max((a - b).amax());
        }
    }
    check(worst < 1e-10, format!("max |Θ recursion − companion power| = {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let mut r = common::rng(61);
    let mut worst_sum = 0.0f64;
    for _ in 0..100 {
        let m = common::random_stable(3, 2, &mut r);
        for s in fevd_draw(&m, 20).unwrap() {
            for row in s.row_iter() {
                worst_sum = worst_sum.max((row.sum() - 1.0).abs());
            }
        }
    }
    let m = tsvar::model::StructuralParams::new(
        DVector::zeros(2),
        vec![DMatrix::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.4])],
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.8, 1.0]).try_inverse().unwrap(),
        DVector::from_vec(vec![6.0, 10.0]),
    )
    .unwrap();
    let shares = fevd_draw(&m, 8).unwrap();
    let mut worst_mc = 0.0f64;
    for h in [1, 4, 8] {
        let sim = common::simulated_shares(&m, h, 200_000, 600 + h as u64);
        worst_mc = worst_mc.max((&shares[h - 1] - sim).amax());
    }
    check(
        worst_sum < 1e-8 && worst_mc < 0.01,
        format!("max |Σ shares − 1| = {worst_sum:.1e}; max |analytic − simulated| = {worst_mc:.4}"),
    )
}

fn criterion_7(fitted: Option<&(Chain, tsvar::data::RegressionLayout)>) -> Outcome {
    let Some((chain, layout)) = fitted else {
        return Outcome::Fail("no fitted chain available".into());
    };
    let mut worst = 0.0f64;
    for d in chain.stable_draws() {
        let hd = hd_draw(d, layout).unwrap();
        worst = worst.max((hd.reconstruction() - &layout.y).amax());
    }
    check(worst < 1e-6, format!("max reconstruction error over {} draws = {worst:.2e}", chain.len()))
}

fn criterion_8() -> Outcome {
    let mut r = common::rng(81);
    let s1 = [-1.0, -1.0, -1.0, 1.0, -1.0];
    let s2 = [-1.0, 1.0, -1.0, 1.0, -1.0];
    let draws: Vec<_> = (0..10_000)
        .map(|_| {
            let mut d = common::random_stable(5, 1, &mut r);
            // bias columns toward the constrained sign patterns
            let mut b = d.impact().unwrap();
            for c in 0..5 {
                let pick: f64 = rand::Rng::gen(&mut r);
                for row in 0..5 {
                    let sign = if pick < 0.3 { s1[row] } else if pick < 0.6 { s2[row] } else { b[(row, c)].signum() };
                    b[(row, c)] = sign * b[(row, c)].abs().max(0.05);
                }
            }
            d.binv = b.try_inverse().unwrap();
            d
        })
        .collect();
    let chain = Chain::from_draws(draws);
    let path = std::env::temp_dir().join(format!("tsvar-acceptance-{}.csv", std::process::id()));
    store::write_chain(&path, &chain).unwrap();
    let stored = store::read_chain(&path).unwrap();
    let _ = std::fs::remove_file(&path);
    let _ = std::fs::remove_file(store::sidecar_path(&path));
    let set = ConstraintSet::on_impact(
        ConstraintMatrix::from_pattern("first", "---+-").unwrap(),
        ConstraintMatrix::from_pattern("second", "-+-+-").unwrap(),
    )
    .unwrap();
    let tally = labeling::pair_posterior_probs(&stored, &set).unwrap();
    let oracle = common::brute_force(&stored, &s1, &s2);
    check(
        tally.counts == oracle,
        format!("{} events counted over {} stored draws", oracle.iter().sum::<usize>(), stored.len()),
    )
}

fn criterion_9() -> Outcome {
    let n = 5;
    let prior = DMatrix::from_fn(n, n, |i, k| if i == k { 0.0 } else { 0.0125 });
    let mut post = DMatrix::zeros(n, n);
    // shares giving Bayes factors 13.24 for (2,3) and 3.60 for (5,3)
    post[(1, 2)] = 13.24 * 0.0125;
    post[(4, 2)] = 3.60 * 0.0125;
    post[(0, 3)] = 2.0 * 0.0125;
    let r = bayes_factors(&post, &prior, labeling::DEFAULT_THRESHOLD);
    let exact = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .filter(|(i, k)| i != k)
        .all(|(i, k)| r.bayes_factor(i, k) == Some(post[(i, k)] / prior[(i, k)]));
    let two_stage = matches!(r.decision, Decision::Selected { pair: (1, 2), runner_up: Some(((4, 2), ratio)), .. } if (ratio - 13.24 / 3.60).abs() < 1e-12);

    let mut close = post.clone();
    close[(4, 2)] = 10.0 * 0.0125;
    let ambiguous = matches!(
        bayes_factors(&close, &prior, 3.2).decision,
        Decision::Ambiguous { best: (1, 2), second: (4, 2), .. }
    );
    let mut single = DMatrix::zeros(n, n);
    single[(1, 2)] = 0.05;
    let one = bayes_factors(&single, &prior, 3.2).selected() == Some((1, 2));
    let none = bayes_factors(&DMatrix::zeros(n, n), &prior, 3.2).decision == Decision::Unsupported;
    check(
        exact && two_stage && ambiguous && one && none,
        format!("exact ratios {exact}, two-stage {two_stage}, ambiguous {ambiguous}, single {one}, none {none}"),
    )
}

fn criterion_10() -> Outcome {
    let mut r = common::rng(101);
    let mut details = Vec::new();
    let mut ok = true;
    for lambda in [3.0, 5.0, 10.0] {
        let x: Vec<f64> = (0..1_000_000).map(|_| simulate::student_t(lambda, &mut r)).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        let target = lambda / (lambda - 2.0);
        let rel = (var / target - 1.0).abs();
        ok &= rel < 0.02;
        details.push(format!("λ={lambda}: {var:.4} vs {target:.4}"));
    }
    check(ok, details.join("; "))
}

fn main() -> ExitCode {
    let (c3, fitted) = criterion_3();
    let results = vec![
        (1, "AIC lag selection on the replication data", criterion_1()),
        (2, "heavy-tailed λ range on the replication data", criterion_2()),
        (3, "simulation recovery of B", c3),
        (4, "joint-distribution sampler test", criterion_4()),
        (5, "MA recursion vs companion powers", criterion_5()),
        (6, "FEVD sums and simulation oracle", criterion_6()),
        (7, "historical decomposition additivity", criterion_7(fitted.as_ref())),
        (8, "constraint counting vs brute force", criterion_8()),
        (9, "Bayes-factor arithmetic and selection rule", criterion_9()),
        (10, "t scale-mixture variance", criterion_10()),
    ];
    let mut failed = false;
    for (id, title, outcome) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed = true;
                ("FAIL", d)
            }
            Outcome::Blocked(d) => ("BLOCKED", d),
        };
        println!("criterion {id:>2} {tag:<7} {title}: {detail}");
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
