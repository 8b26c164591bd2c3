//! Shock labeling: canonical ordering of statistically identified shocks,
//! inequality constraints on impulse responses, posterior and prior
//! probabilities of constrained models, and Bayes factors.
//!
//! Shocks are identified up to a permutation and sign change of the columns
//! of `B`. Draws are first mapped onto a common ordering
//! ([`canonicalize`]), then every column's sign is fixed by making the
//! impact on a normalisation variable non-positive
//! ([`normalize_gdp_negative`]). A column of `B` belongs to `Q_m` when
//! `R_m b ≥ 0`; the constrained model for the ordered pair `(i, k)` holds in a
//! draw when column `i ∈ Q_1`, column `k ∈ Q_2` and no other column lies in
//! `Q_1 ∪ Q_2`. Its Bayes factor against the unconstrained model is the ratio
//! of posterior to prior probability of that event.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, StructuralParams};
use crate::priors::PriorSet;
use crate::sampler::{Chain, StructuralDraw};

/// Default Bayes-factor threshold for "supportive" evidence.
pub const DEFAULT_THRESHOLD: f64 = 3.2;

/// Minimum number of prior draws for Monte Carlo prior probabilities.
pub const MIN_PRIOR_DRAWS: usize = 100_000;

/// `M×N` matrix of sign restrictions; every row has a single `±1` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    pub name: String,
    pub entries: DMatrix<f64>,
}

impl ConstraintMatrix {
    pub fn new(name: impl Into<String>, entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() > entries.ncols() {
            return Err(Error::Constraint(format!(
                "{} constraints on {} variables",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for (r, row) in entries.row_iter().enumerate() {
            let nonzero: Vec<f64> = row.iter().copied().filter(|v| *v != 0.0).collect();
            if nonzero.len() != 1 || nonzero[0].abs() != 1.0 {
                return Err(Error::Constraint(format!(
                    "row {} must contain exactly one entry equal to +1 or -1",
                    r + 1
                )));
            }
        }
        Ok(ConstraintMatrix { name: name.into(), entries })
    }

    /// Build from a per-variable sign pattern such as `"---+-"`; `0` (or `.`)
    /// leaves a variable unconstrained.
    pub fn from_pattern(name: impl Into<String>, pattern: &str) -> Result<Self> {
        let n = pattern.chars().count();
        let mut rows = Vec::new();
        for (j, c) in pattern.chars().enumerate() {
            let sign = match c {
                '+' => 1.0,
                '-' => -1.0,
                '0' | '.' => continue,
                other => {
                    return Err(Error::Constraint(format!(
                        "unknown sign `{other}` in pattern `{pattern}`"
                    )))
                }
            };
            rows.push((j, sign));
        }
        let entries = DMatrix::from_fn(rows.len(), n, |r, c| if rows[r].0 == c { rows[r].1 } else { 0.0 });
        ConstraintMatrix::new(name, entries)
    }

    pub fn n_vars(&self) -> usize {
        self.entries.ncols()
    }

    /// Same restrictions with every sign reversed.
    pub fn negated(&self) -> Self {
        ConstraintMatrix { name: self.name.clone(), entries: -&self.entries }
    }
}

/// True iff every component of `R b` is non-negative.
pub fn satisfies(r: &ConstraintMatrix, b_col: &DVector<f64>) -> bool {
    (&r.entries * b_col).iter().all(|v| *v >= 0.0)
}

/// Two constraint matrices and the response horizons they apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub first: ConstraintMatrix,
    pub second: ConstraintMatrix,
    /// Horizons `j` whose `Θ_j` columns must all satisfy the restrictions.
    pub horizons: Vec<usize>,
}

impl ConstraintSet {
    /// Restrictions on impact responses only.
    pub fn on_impact(first: ConstraintMatrix, second: ConstraintMatrix) -> Result<Self> {
        ConstraintSet::new(first, second, vec![0])
    }

    pub fn new(first: ConstraintMatrix, second: ConstraintMatrix, horizons: Vec<usize>) -> Result<Self> {
        if first.n_vars() != second.n_vars() {
            return Err(Error::Constraint("constraint matrices differ in width".into()));
        }
        if horizons.is_empty() {
            return Err(Error::Constraint("at least one horizon is required".into()));
        }
        Ok(ConstraintSet { first, second, horizons })
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }
}

/// Whether column `i` of every response matrix satisfies `r`.
fn column_in(r: &ConstraintMatrix, responses: &[DMatrix<f64>], i: usize) -> bool {
    responses.iter().all(|m| satisfies(r, &m.column(i).into_owned()))
}

/// `(Q_1, Q_2)` membership of every shock, given the response matrices at
/// the constraint horizons.
pub fn memberships(set: &ConstraintSet, responses: &[DMatrix<f64>]) -> (Vec<bool>, Vec<bool>) {
    let n = responses[0].ncols();
    let q1 = (0..n).map(|i| column_in(&set.first, responses, i)).collect();
    let q2 = (0..n).map(|i| column_in(&set.second, responses, i)).collect();
    (q1, q2)
}

/// Ordered pairs `(i, k)` whose constrained model holds for one draw.
pub fn pair_events(q1: &[bool], q2: &[bool]) -> Vec<(usize, usize)> {
    let n = q1.len();
    let mut out = Vec::new();
    for i in 0..n {
        if !q1[i] {
            continue;
        }
        for k in 0..n {
            if k == i || !q2[k] {
                continue;
            }
            let others_clear = (0..n)
                .filter(|m| *m != i && *m != k)
                .all(|m| !q1[m] && !q2[m]);
            if others_clear {
                out.push((i, k));
            }
        }
    }
    out
}

/// Response matrices `Θ_j` (`Θ_0 = B`) at the requested horizons.
pub fn responses_at(draw: &StructuralDraw, b: &DMatrix<f64>, horizons: &[usize]) -> Vec<DMatrix<f64>> {
    let max = horizons.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![b.clone()];
    }
    let ma = model::ma_coefficients_with_impact(draw, b, max);
    horizons.iter().map(|h| ma.theta[*h].clone()).collect()
}

// ---------------------------------------------------------------------------
// canonical ordering

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(b) / denom
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Assignment maximising the total score; `perm[r]` is the column matched to
/// row `r`. Exhaustive in lexicographic order for small problems, so among
/// equal totals the lexicographically smallest assignment wins.
pub fn best_assignment(score: &DMatrix<f64>) -> Vec<usize> {
    let n = score.nrows();
    if n > 8 {
        return hungarian_max(score);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let total = |p: &[usize]| p.iter().enumerate().map(|(r, c)| score[(r, *c)]).sum::<f64>();
    let mut best_total = total(&perm);
    while next_permutation(&mut perm) {
        let t = total(&perm);
        if t > best_total + 1e-12 {
            best_total = t;
            best = perm.clone();
        }
    }
    best
}

/// O(n³) Hungarian algorithm on `-score` (maximisation).
fn hungarian_max(score: &DMatrix<f64>) -> Vec<usize> {
    let n = score.nrows();
    let cost = |i: usize, j: usize| -score[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Reorder shocks: output shock `r` is input shock `perm[r]` multiplied by
/// `signs[r]`. Rows of `B⁻¹` and entries of `λ` move with their shocks.
pub fn permute_shocks(draw: &StructuralDraw, perm: &[usize], signs: &[f64]) -> StructuralDraw {
    let n = draw.n_vars();
    let binv = DMatrix::from_fn(n, n, |r, c| signs[r] * draw.binv[(perm[r], c)]);
    let lambda = DVector::from_fn(n, |r, _| draw.lambda[perm[r]]);
    StructuralParams { binv, lambda, ..draw.clone() }
}

/// Observationally equivalent draw whose `B` columns best match the
/// reference's (largest total absolute cosine similarity), each signed to
/// point the same way as its reference column.
pub fn canonicalize(draw: &StructuralDraw, reference: &StructuralDraw) -> Result<StructuralDraw> {
    if draw.n_vars() != reference.n_vars() {
        return Err(Error::Constraint("draw and reference differ in size".into()));
    }
    let b = draw.impact()?;
    let b_ref = reference.impact()?;
    canonicalize_with_impacts(draw, &b, &b_ref)
}

fn canonicalize_with_impacts(
    draw: &StructuralDraw,
    b: &DMatrix<f64>,
    b_ref: &DMatrix<f64>,
) -> Result<StructuralDraw> {
    let n = draw.n_vars();
    let cols: Vec<DVector<f64>> = (0..n).map(|j| linalg::column(b, j)).collect();
    let ref_cols: Vec<DVector<f64>> = (0..n).map(|j| linalg::column(b_ref, j)).collect();
    let score = DMatrix::from_fn(n, n, |r, c| cosine(&ref_cols[r], &cols[c]).abs());
    let perm = best_assignment(&score);
    let signs: Vec<f64> = (0..n)
        .map(|r| if ref_cols[r].dot(&cols[perm[r]]) < 0.0 { -1.0 } else { 1.0 })
        .collect();
    Ok(permute_shocks(draw, &perm, &signs))
}

/// Flip shocks whose impact on variable `var` is positive, so that every
/// column of `B` has a non-positive entry in row `var`. Zero impacts are left
/// alone.
pub fn normalize_sign(draw: &StructuralDraw, var: usize) -> Result<StructuralDraw> {
    let b = draw.impact()?;
    Ok(normalize_sign_with_impact(draw, &b, var))
}

fn normalize_sign_with_impact(draw: &StructuralDraw, b: &DMatrix<f64>, var: usize) -> StructuralDraw {
    let n = draw.n_vars();
    let signs: Vec<f64> = (0..n).map(|i| if b[(var, i)] > 0.0 { -1.0 } else { 1.0 }).collect();
    let perm: Vec<usize> = (0..n).collect();
    permute_shocks(draw, &perm, &signs)
}

/// Sign normalisation on the first variable (real GDP growth by convention).
pub fn normalize_gdp_negative(draw: &StructuralDraw) -> Result<StructuralDraw> {
    normalize_sign(draw, 0)
}

/// Reference draw with `B` equal to the element-wise posterior mean of the
/// canonicalised impacts and `λ` the posterior mean.
fn mean_reference(draws: &[StructuralDraw], impacts: &[DMatrix<f64>]) -> Result<StructuralDraw> {
    let n = draws[0].n_vars();
    let mut b_mean = DMatrix::zeros(n, n);
    let mut l_mean = DVector::zeros(n);
    for (d, b) in draws.iter().zip(impacts) {
        b_mean += b;
        l_mean += &d.lambda;
    }
    b_mean /= draws.len() as f64;
    l_mean /= draws.len() as f64;
    let binv = linalg::guarded_inverse(&b_mean)?;
    Ok(StructuralParams { binv, lambda: l_mean, ..draws[0].clone() })
}

/// Options for [`prepare_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Canonicalization {
    /// Explicit reference; when `None` a pilot pass against the first draw
    /// builds the posterior-mean reference.
    pub reference: Option<StructuralDraw>,
    /// Variable whose impact response is made non-positive; `None` skips the
    /// sign normalisation.
    pub normalize_var: Option<usize>,
}

impl Default for Canonicalization {
    fn default() -> Self {
        Canonicalization { reference: None, normalize_var: Some(0) }
    }
}

/// Canonicalise every draw and apply the sign normalisation.
pub fn prepare_chain(chain: &Chain, opts: &Canonicalization) -> Result<Chain> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let impacts: Vec<DMatrix<f64>> = chain.draws.iter().map(|d| d.impact()).collect::<Result<_>>()?;
    let reference = match &opts.reference {
        Some(r) => r.clone(),
        None => {
            let b0 = impacts[0].clone();
            let pilot: Vec<StructuralDraw> = chain
                .draws
                .iter()
                .zip(&impacts)
                .map(|(d, b)| canonicalize_with_impacts(d, b, &b0))
                .collect::<Result<_>>()?;
            let pilot_impacts: Vec<DMatrix<f64>> = pilot.iter().map(|d| d.impact()).collect::<Result<_>>()?;
            mean_reference(&pilot, &pilot_impacts)?
        }
    };
    let b_ref = reference.impact()?;
    let mut draws = Vec::with_capacity(chain.len());
    for (d, b) in chain.draws.iter().zip(&impacts) {
        let mut c = canonicalize_with_impacts(d, b, &b_ref)?;
        if let Some(var) = opts.normalize_var {
            let b_c = c.impact()?;
            c = normalize_sign_with_impact(&c, &b_c, var);
        }
        draws.push(c);
    }
    Ok(Chain { draws, stable: chain.stable.clone(), meta: chain.meta.clone() })
}

// ---------------------------------------------------------------------------
// probabilities

/// Tally of pair events over a set of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTally {
    pub n_vars: usize,
    pub n_draws: usize,
    /// `counts[(i, k)]`, zero on the diagonal.
    pub counts: DMatrix<usize>,
}

impl PairTally {
    fn new(n: usize) -> Self {
        PairTally { n_vars: n, n_draws: 0, counts: DMatrix::zeros(n, n) }
    }

    fn add(&mut self, q1: &[bool], q2: &[bool]) {
        self.n_draws += 1;
        for (i, k) in pair_events(q1, q2) {
            self.counts[(i, k)] += 1;
        }
    }

    pub fn probability(&self, i: usize, k: usize) -> f64 {
        self.counts[(i, k)] as f64 / self.n_draws as f64
    }

    /// Monte Carlo standard error of [`Self::probability`] for independent draws.
    pub fn std_error(&self, i: usize, k: usize) -> f64 {
        let p = self.probability(i, k);
        (p * (1.0 - p) / self.n_draws as f64).sqrt()
    }

    pub fn probabilities(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_vars, self.n_vars, |i, k| self.probability(i, k))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_vars;
        (0..n).flat_map(move |i| (0..n).filter(move |k| *k != i).map(move |k| (i, k)))
    }
}

/// Posterior tally of the pair events. The chain must already be
/// canonicalised and sign-normalised (see [`prepare_chain`]).
pub fn pair_posterior_probs(chain: &Chain, set: &ConstraintSet) -> Result<PairTally> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = chain.draws[0].n_vars();
    if set.first.n_vars() != n {
        return Err(Error::Constraint(format!(
            "constraints cover {} variables, model has {n}",
            set.first.n_vars()
        )));
    }
    let mut tally = PairTally::new(n);
    for d in &chain.draws {
        let b = d.impact()?;
        let responses = responses_at(d, &b, &set.horizons);
        let (q1, q2) = memberships(set, &responses);
        tally.add(&q1, &q2);
    }
    Ok(tally)
}

/// Prior draw of the parameters that the constraints depend on.
fn prior_draw<R: Rng + ?Sized>(priors: &PriorSet, lags: usize, need_dynamics: bool, rng: &mut R) -> StructuralDraw {
    let n = priors.n_vars();
    let binv = DMatrix::from_fn(n, n, |r, c| {
        priors.b_mean[c * n + r] + priors.b_sd * rng.sample::<f64, _>(StandardNormal)
    });
    let a = if need_dynamics {
        DVector::from_fn(priors.a_mean.len(), |i, _| {
            priors.a_mean[i] + priors.a_var[i].sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
    } else {
        DVector::zeros(n * (n * lags + 1))
    };
    let mut draw = StructuralParams::from_coefficients(
        &a,
        n,
        lags,
        DMatrix::identity(n, n),
        DVector::from_element(n, 10.0),
    )
    .expect("prior dimensions");
    draw.binv = binv;
    draw
}

/// Invert a prior draw of `B⁻¹` and apply the optional sign normalisation to
/// both the draw and its impact matrix; `None` for singular draws.
fn normalized_prior_draw(d: StructuralDraw, normalize_var: Option<usize>) -> Option<(StructuralDraw, DMatrix<f64>)> {
    let mut b = d.binv.clone().try_inverse()?;
    let Some(var) = normalize_var else {
        return Some((d, b));
    };
    let d = normalize_sign_with_impact(&d, &b, var);
    for i in 0..b.ncols() {
        if b[(var, i)] > 0.0 {
            b.column_mut(i).neg_mut();
        }
    }
    Some((d, b))
}

/// Monte Carlo prior probabilities of the pair events: invert prior draws of
/// `B⁻¹`, apply the sign normalisation, count. Coefficients are drawn only
/// when a constraint horizon beyond impact needs them. Singular draws are
/// skipped.
pub fn pair_prior_probs<R: Rng + ?Sized>(
    priors: &PriorSet,
    lags: usize,
    set: &ConstraintSet,
    normalize_var: Option<usize>,
    n_draws: usize,
    rng: &mut R,
) -> Result<PairTally> {
    if n_draws < MIN_PRIOR_DRAWS {
        return Err(Error::Constraint(format!(
            "prior probabilities need at least {MIN_PRIOR_DRAWS} draws"
        )));
    }
    let n = priors.n_vars();
    let need_dynamics = set.max_horizon() > 0;
    let mut tally = PairTally::new(n);
    while tally.n_draws < n_draws {
        let d = prior_draw(priors, lags, need_dynamics, rng);
        let Some((d, b)) = normalized_prior_draw(d, normalize_var) else {
            continue;
        };
        let responses = responses_at(&d, &b, &set.horizons);
        let (q1, q2) = memberships(set, &responses);
        tally.add(&q1, &q2);
    }
    Ok(tally)
}

/// Prior probability that shock `i` alone satisfies `r` on impact.
pub fn single_prior_probs<R: Rng + ?Sized>(
    priors: &PriorSet,
    r: &ConstraintMatrix,
    normalize_var: Option<usize>,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_draws < MIN_PRIOR_DRAWS {
        return Err(Error::Constraint(format!(
            "prior probabilities need at least {MIN_PRIOR_DRAWS} draws"
        )));
    }
    let mut impacts = Vec::with_capacity(n_draws);
    while impacts.len() < n_draws {
        let d = prior_draw(priors, 1, false, rng);
        if let Some((_, b)) = normalized_prior_draw(d, normalize_var) {
            impacts.push(b);
        }
    }
    Ok(single_probs(impacts.iter(), r))
}

/// Share of impact matrices in which shock `i` alone satisfies `r`
/// (single-shock labeling).
pub fn single_probs<'a>(
    impacts: impl Iterator<Item = &'a DMatrix<f64>>,
    r: &ConstraintMatrix,
) -> Vec<f64> {
    let mut counts: Vec<usize> = Vec::new();
    let mut total = 0usize;
    for b in impacts {
        let n = b.ncols();
        if counts.is_empty() {
            counts = vec![0; n];
        }
        total += 1;
        let inside: Vec<bool> = (0..n).map(|i| satisfies(r, &b.column(i).into_owned())).collect();
        if inside.iter().filter(|v| **v).count() == 1 {
            let i = inside.iter().position(|v| *v).unwrap();
            counts[i] += 1;
        }
    }
    counts.iter().map(|c| *c as f64 / total.max(1) as f64).collect()
}

// ---------------------------------------------------------------------------
// Bayes factors

/// Outcome of the labeling rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Decision {
    /// No constrained model exceeds the threshold.
    Unsupported,
    /// A unique pair is supported.
    Selected {
        pair: (usize, usize),
        bayes_factor: f64,
        /// Competing supported pair and the Bayes factor of the selected model
        /// against it, when more than one pair cleared the threshold.
        runner_up: Option<((usize, usize), f64)>,
    },
    /// Several pairs are supported and the best two cannot be separated.
    Ambiguous {
        best: (usize, usize),
        second: (usize, usize),
        ratio: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingResult {
    pub n_vars: usize,
    pub pair_probs: BTreeMap<String, f64>,
    pub prior_probs: BTreeMap<String, f64>,
    /// `None` where the prior probability estimate is zero.
    pub bayes_factors: BTreeMap<String, Option<f64>>,
    /// Pairs whose Bayes factor is undefined.
    pub undefined: Vec<(usize, usize)>,
    pub decision: Decision,
    pub threshold: f64,
}

pub fn pair_key(i: usize, k: usize) -> String {
    format!("{},{}", i + 1, k + 1)
}

impl LabelingResult {
    pub fn bayes_factor(&self, i: usize, k: usize) -> Option<f64> {
        self.bayes_factors.get(&pair_key(i, k)).copied().flatten()
    }

    pub fn selected(&self) -> Option<(usize, usize)> {
        match self.decision {
            Decision::Selected { pair, .. } => Some(pair),
            _ => None,
        }
    }
}

/// Bayes factors `posterior share / prior share` for every ordered pair and
/// the labeling decision.
///
/// No pair above `threshold` → unsupported; exactly one → selected; several
/// → the top two are compared by the ratio of their Bayes factors (the Bayes
/// factor between the two constrained models) and the better one is selected
/// only if that ratio also exceeds `threshold`.
pub fn bayes_factors(posterior: &DMatrix<f64>, prior: &DMatrix<f64>, threshold: f64) -> LabelingResult {
    let n = posterior.nrows();
    let mut pair_probs = BTreeMap::new();
    let mut prior_probs = BTreeMap::new();
    let mut factors = BTreeMap::new();
    let mut undefined = Vec::new();
    let mut supported: Vec<((usize, usize), f64)> = Vec::new();
    for i in 0..n {
        for k in 0..n {
            if i == k {
                continue;
            }
            let key = pair_key(i, k);
            let post = posterior[(i, k)];
            let pri = prior[(i, k)];
            pair_probs.insert(key.clone(), post);
            prior_probs.insert(key.clone(), pri);
            let bf = if pri > 0.0 { Some(post / pri) } else { None };
            match bf {
                None => undefined.push((i, k)),
                Some(v) if v > threshold => supported.push(((i, k), v)),
                _ => {}
            }
            factors.insert(key, bf);
        }
    }
    // stable sort keeps row-major order among equal Bayes factors
    supported.sort_by(|a, b| b.1.total_cmp(&a.1));
    let decision = match supported.as_slice() {
        [] => Decision::Unsupported,
        [(pair, bf)] => Decision::Selected { pair: *pair, bayes_factor: *bf, runner_up: None },
        [(best, bf1), (second, bf2), ..] => {
            let ratio = bf1 / bf2;
            if ratio > threshold {
                Decision::Selected {
                    pair: *best,
                    bayes_factor: *bf1,
                    runner_up: Some((*second, ratio)),
                }
            } else {
                Decision::Ambiguous { best: *best, second: *second, ratio }
            }
        }
    };
    LabelingResult {
        n_vars: n,
        pair_probs,
        prior_probs,
        bayes_factors: factors,
        undefined,
        decision,
        threshold,
    }
}

/// Full labeling pipeline on a raw chain: canonicalise, normalise, tally
/// posterior and prior events, compute Bayes factors.
pub fn label_chain<R: Rng + ?Sized>(
    chain: &Chain,
    priors: &PriorSet,
    set: &ConstraintSet,
    opts: &Canonicalization,
    prior_draws: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<(Chain, LabelingResult)> {
    let prepared = prepare_chain(chain, opts)?;
    let post = pair_posterior_probs(&prepared, set)?;
    let prior = pair_prior_probs(priors, chain.meta.n_lags.max(1), set, opts.normalize_var, prior_draws, rng)?;
    let result = bayes_factors(&post.probabilities(), &prior.probabilities(), threshold);
    Ok((prepared, result))
}
