mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use tsvar::labeling::*;
use tsvar::model::StructuralParams;
use tsvar::priors::{default_priors, MinnesotaConfig};
use tsvar::sampler::{log_posterior_kernel, run_gibbs, Chain, SamplerConfig};

fn draw_with_impact(b: &DMatrix<f64>, lambda: &[f64]) -> StructuralParams {
    let n = b.nrows();
    StructuralParams::new(
        DVector::from_element(n, 0.1),
        vec![DMatrix::from_fn(n, n, |i, j| if i == j { 0.3 } else { 0.05 })],
        b.clone().try_inverse().unwrap(),
        DVector::from_column_slice(lambda),
    )
    .unwrap()
}

fn paper_set() -> ConstraintSet {
    ConstraintSet::on_impact(
        ConstraintMatrix::from_pattern("demand", "---+-").unwrap(),
        ConstraintMatrix::from_pattern("supply", "-+-+-").unwrap(),
    )
    .unwrap()
}

fn random_signed_chain(n_draws: usize, seed: u64) -> Chain {
    let mut r = common::rng(seed);
    let s1 = [-1.0, -1.0, -1.0, 1.0, -1.0];
    let s2 = [-1.0, 1.0, -1.0, 1.0, -1.0];
    let draws = (0..n_draws)
        .map(|_| {
            let b = DMatrix::from_fn(5, 5, |row, col| {
                let mag = 0.2 + r.gen::<f64>();
                let sign = match (col + r.gen_range(0..3)) % 4 {
                    0 => s1[row],
                    1 => s2[row],
                    _ => if r.gen::<bool>() { 1.0 } else { -1.0 },
                };
                sign * mag + 0.05 * r.sample::<f64, _>(StandardNormal)
            });
            draw_with_impact(&b, &[4.0, 5.0, 6.0, 7.0, 8.0])
        })
        .collect();
    Chain::from_draws(draws)
}

#[test]
fn counting_matches_brute_force_enumeration() {
    let chain = random_signed_chain(10_000, 701);
    let tally = pair_posterior_probs(&chain, &paper_set()).unwrap();
    let oracle = common::brute_force(&chain, &[-1.0, -1.0, -1.0, 1.0, -1.0], &[-1.0, 1.0, -1.0, 1.0, -1.0]);
    assert_eq!(tally.counts, oracle);
    assert!(oracle.iter().sum::<usize>() > 50);
}

#[test]
fn pair_events_never_double_count() {
    let chain = random_signed_chain(5_000, 702);
    let set = paper_set();
    for d in &chain.draws {
        let b = d.impact().unwrap();
        let (q1, q2) = memberships(&set, &responses_at(d, &b, &set.horizons));
        assert!(pair_events(&q1, &q2).len() <= 1);
    }
    let tally = pair_posterior_probs(&chain, &set).unwrap();
    assert!(tally.probabilities().sum() <= 1.0 + 1e-12);
}

#[test]
fn hand_built_chain() {
    let set = ConstraintSet::on_impact(
        ConstraintMatrix::from_pattern("one", "-+-").unwrap(),
        ConstraintMatrix::from_pattern("two", "--+").unwrap(),
    )
    .unwrap();
    let q1 = [-1.0, 1.0, -1.0];
    let q2 = [-1.0, -1.0, 1.0];
    let neither = [-1.0, -1.0, -1.0];
    let build = |cols: [[f64; 3]; 3]| {
        let b = DMatrix::from_fn(3, 3, |r, c| cols[c][r] * (1.0 + 0.37 * (r * (c + 1)) as f64 + if r == c { 2.0 } else { 0.0 }));
        draw_with_impact(&b, &[5.0, 5.0, 5.0])
    };
    let chain = Chain::from_draws(vec![
        build([q1, q2, neither]), // (1,2)
        build([q2, neither, q1]), // (3,1)
        build([q1, q2, q2]),      // none: shock 3 in Q2
        build([q1, neither, q2]), // (1,3)
    ]);
    let t = pair_posterior_probs(&chain, &set).unwrap();
    assert_eq!(t.n_draws, 4);
    assert_eq!(t.counts[(0, 1)], 1);
    assert_eq!(t.counts[(2, 0)], 1);
    assert_eq!(t.counts[(0, 2)], 1);
    assert_eq!(t.counts.iter().sum::<usize>(), 3);
    assert_eq!(t.probability(0, 1), 0.25);

    let none = Chain::from_draws(vec![build([neither, neither, neither]); 3]);
    assert_eq!(pair_posterior_probs(&none, &set).unwrap().probabilities(), DMatrix::zeros(3, 3));
    assert!(pair_posterior_probs(&Chain::from_draws(Vec::new()), &set).is_err());
}

#[test]
fn sign_covariance() {
    let mut r = common::rng(703);
    let rm = ConstraintMatrix::from_pattern("x", "+-0+").unwrap();
    for _ in 0..1000 {
        let b = DVector::from_fn(4, |_, _| r.sample::<f64, _>(StandardNormal));
        assert_eq!(satisfies(&rm.negated(), &(-&b)), satisfies(&rm, &b));
    }
}

#[test]
fn canonicalize_identity_and_permutation() {
    let c1 = [1.0, 0.2, -0.1];
    let c2 = [0.3, 1.0, 0.4];
    let c3 = [-0.2, 0.1, 1.0];
    let b = DMatrix::from_fn(3, 3, |r, c| [c1, c2, c3][c][r]);
    let reference = draw_with_impact(&b, &[4.0, 6.0, 9.0]);
    assert_eq!(canonicalize(&reference, &reference).unwrap(), reference);

    // draw with columns (−c2, c1, c3)
    let shuffled = DMatrix::from_fn(3, 3, |r, c| match c {
        0 => -c2[r],
        1 => c1[r],
        _ => c3[r],
    });
    let draw = draw_with_impact(&shuffled, &[6.0, 4.0, 9.0]);
    let out = canonicalize(&draw, &reference).unwrap();
    assert!((out.impact().unwrap() - &b).amax() < 1e-12);
    assert_eq!(out.lambda, reference.lambda);
}

#[test]
fn canonicalize_preserves_kernel() {
    let truth = common::recovery_model();
    let layout = common::simulated_layout(&truth, 120, 704);
    let sigma = DVector::from_element(3, 1.0);
    let priors = default_priors(&MinnesotaConfig::with_scales(sigma), 3, 2);
    let b = truth.impact().unwrap();
    let mut r = common::rng(705);
    for _ in 0..20 {
        // random permutation and signs with equal λ so the prior is unchanged too
        let mut perm = vec![0, 1, 2];
        for i in (1..3).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let signs: Vec<f64> = (0..3).map(|_| if r.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let scrambled = DMatrix::from_fn(3, 3, |row, c| signs[c] * b[(row, perm[c])]);
        let mut draw = truth.clone();
        draw.lambda = DVector::from_element(3, 6.0);
        draw.binv = scrambled.try_inverse().unwrap();
        let before = log_posterior_kernel(&draw, &layout, &priors).unwrap();
        let mut reference = truth.clone();
        reference.lambda = draw.lambda.clone();
        let out = canonicalize(&draw, &reference).unwrap();
        let after = log_posterior_kernel(&out, &layout, &priors).unwrap();
        assert!((before - after).abs() < 1e-12 * before.abs().max(1.0));
        assert!((out.impact().unwrap() - &b).amax() < 1e-10);
    }
}

#[test]
fn unequal_lambda_kernel_changes_only_with_mismatched_pairs() {
    let truth = common::recovery_model();
    let layout = common::simulated_layout(&truth, 120, 706);
    let sigma = DVector::from_element(3, 1.0);
    let priors = default_priors(&MinnesotaConfig::with_scales(sigma), 3, 2);
    // moving each shock together with its λ is an observational equivalence
    let swapped = permute_shocks(&truth, &[1, 0, 2], &[1.0, -1.0, 1.0]);
    let k0 = log_posterior_kernel(&truth, &layout, &priors).unwrap();
    let k1 = log_posterior_kernel(&swapped, &layout, &priors).unwrap();
    assert!((k0 - k1).abs() < 1e-12 * k0.abs());
    // swapping B⁻¹ rows while leaving λ in place is not
    let mut broken = swapped.clone();
    broken.lambda = truth.lambda.clone();
    let k2 = log_posterior_kernel(&broken, &layout, &priors).unwrap();
    assert!((k0 - k2).abs() > 1e-6);
}

#[test]
fn gdp_normalisation() {
    let eye = draw_with_impact(&DMatrix::identity(2, 2), &[5.0, 5.0]);
    let out = normalize_gdp_negative(&eye).unwrap();
    let b = out.impact().unwrap();
    assert_eq!(b.column(0).as_slice(), &[-1.0, 0.0]);
    // zero impact stays unflipped
    assert_eq!(b.column(1).as_slice(), &[0.0, 1.0]);
    assert_eq!(normalize_gdp_negative(&out).unwrap(), out);

    let negative = draw_with_impact(&DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, 0.3, 1.0]), &[5.0, 5.0]);
    assert_eq!(normalize_gdp_negative(&negative).unwrap(), negative);
}

#[test]
fn prior_single_sign_symmetry() {
    let sigma = DVector::from_element(1, 1.0);
    let mut priors = default_priors(&MinnesotaConfig::with_scales(sigma), 1, 1);
    priors.b_mean = DVector::zeros(1);
    let r_neg = ConstraintMatrix::from_pattern("neg", "-").unwrap();
    let mut r = common::rng(710);
    let raw = single_prior_probs(&priors, &r_neg, None, 200_000, &mut r).unwrap();
    let se = (0.25f64 / 200_000.0).sqrt();
    assert!((raw[0] - 0.5).abs() < 3.0 * se, "{raw:?}");
    let normalized = single_prior_probs(&priors, &r_neg, Some(0), 100_000, &mut r).unwrap();
    assert_eq!(normalized[0], 1.0);
    assert!(single_prior_probs(&priors, &r_neg, None, 10, &mut r).is_err());
}

#[test]
fn prior_probability_error_shrinks_with_draws() {
    let sigma = DVector::from_element(5, 1.0);
    let priors = default_priors(&MinnesotaConfig::with_scales(sigma), 5, 2);
    let set = paper_set();
    let mut r = common::rng(711);
    let small = pair_prior_probs(&priors, 2, &set, Some(0), 100_000, &mut r).unwrap();
    let large = pair_prior_probs(&priors, 2, &set, Some(0), 200_000, &mut r).unwrap();
    // standard error of the union of all pair events, which is common enough
    // for the plug-in estimate to be stable
    let se = |t: &PairTally| {
        let p = t.probabilities().sum();
        (p * (1.0 - p) / t.n_draws as f64).sqrt()
    };
    let ratio = se(&large) / se(&small);
    assert!((ratio - 0.5f64.sqrt()).abs() < 0.03, "{ratio}");
}

#[test]
fn prior_probabilities_agree_across_seeds() {
    let sigma = DVector::from_element(5, 1.0);
    let priors = default_priors(&MinnesotaConfig::with_scales(sigma), 5, 2);
    let set = paper_set();
    let a = pair_prior_probs(&priors, 2, &set, Some(0), 200_000, &mut common::rng(712)).unwrap();
    let b = pair_prior_probs(&priors, 2, &set, Some(0), 200_000, &mut common::rng(713)).unwrap();
    for (i, k) in a.pairs() {
        let se = (a.std_error(i, k).powi(2) + b.std_error(i, k).powi(2)).sqrt();
        assert!((a.probability(i, k) - b.probability(i, k)).abs() <= 3.0 * se + 1e-12);
    }
    // under an isotropic prior every ordered pair is equally likely
    let mean = a.probabilities().sum() / 20.0;
    assert!(mean > 0.0);
}

#[test]
fn bayes_factor_is_ratio_of_shares() {
    let mut post = DMatrix::zeros(3, 3);
    let mut prior = DMatrix::from_element(3, 3, 0.05);
    post[(1, 2)] = 0.25;
    post[(2, 0)] = 0.01;
    prior[(2, 0)] = 0.02;
    let r = bayes_factors(&post, &prior, DEFAULT_THRESHOLD);
    assert_eq!(r.bayes_factor(1, 2), Some(0.25 / 0.05));
    assert_eq!(r.bayes_factor(2, 0), Some(0.01 / 0.02));
    assert_eq!(r.selected(), Some((1, 2)));
    assert_eq!(r.bayes_factors.len(), 6);
}

#[test]
fn simulated_pair_is_selected() {
    // shock 1 follows the first pattern, shock 2 the second, shock 3 neither
    let b = DMatrix::from_row_slice(3, 3, &[-1.0, -0.4, -0.5, -0.5, 1.0, -0.6, 0.6, -0.5, -1.0]);
    let truth = StructuralParams::new(
        DVector::from_vec(vec![0.1, 0.0, -0.1]),
        vec![DMatrix::from_row_slice(3, 3, &[0.4, 0.1, 0.0, 0.0, 0.3, 0.1, 0.1, 0.0, 0.2])],
        b.clone().try_inverse().unwrap(),
        DVector::from_vec(vec![3.5, 4.0, 5.0]),
    )
    .unwrap();
    let layout = common::simulated_layout(&truth, 400, 720);
    let priors = default_priors(&MinnesotaConfig::with_scales(DVector::from_element(3, 1.0)), 3, 1);
    let cfg = SamplerConfig { iterations: 12_000, burn_in: 4_000, thin: 4, seed: 5, ..SamplerConfig::desk() };
    let chain = run_gibbs(&layout, &priors, &cfg).unwrap();
    let set = ConstraintSet::on_impact(
        ConstraintMatrix::from_pattern("first", "--+").unwrap(),
        ConstraintMatrix::from_pattern("second", "-+-").unwrap(),
    )
    .unwrap();
    let (prepared, result) = label_chain(
        &chain,
        &priors,
        &set,
        &Canonicalization::default(),
        MIN_PRIOR_DRAWS,
        DEFAULT_THRESHOLD,
        &mut common::rng(721),
    )
    .unwrap();
    let (i, k) = result.selected().expect("a pair should be selected");
    // the selected canonical shocks point the way of the true first two columns
    let b_med = prepared.draws[prepared.len() / 2].impact().unwrap();
    let cos = |a: usize, t: usize| {
        let x = b_med.column(a);
        let y = b.column(t);
        x.dot(&y) / (x.norm() * y.norm())
    };
    assert!(cos(i, 0) > 0.8, "{}", cos(i, 0));
    assert!(cos(k, 1) > 0.8, "{}", cos(k, 1));

    // odd and even draws give consistent probabilities
    let half = |parity: usize| {
        let draws: Vec<_> = prepared.draws.iter().skip(parity).step_by(2).cloned().collect();
        pair_posterior_probs(&Chain::from_draws(draws), &set).unwrap()
    };
    let (odd, even) = (half(1), half(0));
    let se = (odd.std_error(i, k).powi(2) + even.std_error(i, k).powi(2)).sqrt();
    // autocorrelation inflates the iid standard error; allow for it
    assert!((odd.probability(i, k) - even.probability(i, k)).abs() <= 3.0 * se.max(0.01));
}
