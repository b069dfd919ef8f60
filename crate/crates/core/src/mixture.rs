//! Robust learning of a mixture of two balanced binary products.
//!
//! Each filter either removes samples or emits a grid of candidate mixtures
//! around a line that both component means lie close to. The driver pools
//! the candidates of all filters and picks one by a tournament.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::distances::{mass_table, pattern_index, MAX_ENUM_DIM};
use crate::error::{Error, Result};
use crate::filter::{
    tail_threshold_search, Diagnostics, FilterConfig, FilterOutcome, StepKind, StepRecord,
    StepResult, TailRule,
};
use crate::gaussian::record;
use crate::linalg::{
    covariance, eigenpairs_above, extreme_eigenpair, mean, top_eigenpair_abs,
    top_eigenpair_constrained, zero_diagonal, EigenOptions, Which,
};
use crate::models::{round_model_to_grid, BinaryProductModel, Model, ProductMixtureModel};
use crate::product::{check_binary, learn_balanced_product};
use crate::rng::Seed;
use crate::samples::SampleSet;
use crate::tournament::{tournament, TournamentOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub epsilon: f64,
    /// Components are assumed `c`-balanced; candidate means are clamped to
    /// `[c, 1 − c]`.
    pub balance: f64,
    /// The anchor filter emits candidates when the constrained variance is
    /// at most this.
    pub anchor_small_lambda: f64,
    /// Constant `C` of the anchor filter's `δ`.
    pub anchor_delta_c: f64,
    /// Constant `C` of the close filter's eigenvalue threshold `Cδ²`.
    pub close_c: f64,
    pub candidate_cap: usize,
    /// Reference rows for the pairwise census; `None` uses every row.
    pub census_budget: Option<usize>,
    /// Candidates kept for the tournament after a likelihood screen.
    pub prescreen: usize,
    pub mc: usize,
    pub seed: Seed,
    pub eig_tol: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            epsilon: 0.005,
            balance: 0.25,
            anchor_small_lambda: 0.5,
            anchor_delta_c: 1.0,
            close_c: 10.0,
            candidate_cap: 50_000,
            census_budget: None,
            prescreen: 256,
            mc: 20_000,
            seed: Seed(0),
            eig_tol: 1e-8,
        }
    }
}

impl MixtureConfig {
    pub fn new(epsilon: f64) -> Self {
        MixtureConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::param(format!("epsilon {} outside (0, 1/2)", self.epsilon)));
        }
        if !(self.balance >= 0.0 && self.balance < 0.5) {
            return Err(Error::param("balance must lie in [0, 1/2)"));
        }
        if self.candidate_cap == 0 || self.prescreen == 0 || self.mc == 0 {
            return Err(Error::param("caps must be positive"));
        }
        if !(self.anchor_small_lambda > 0.0 && self.anchor_delta_c > 0.0 && self.close_c > 0.0) {
            return Err(Error::param("mixture constants must be positive"));
        }
        Ok(())
    }

    /// Grid spacing `ε^{1/6}`.
    pub fn grid(&self) -> f64 {
        self.epsilon.powf(1.0 / 6.0)
    }

    fn log_inv_eps(&self) -> f64 {
        (1.0 / self.epsilon).ln()
    }
}

/// Points `center + i·step·dir` for `|i| ≤ reach`, clamped to `[c, 1 − c]`,
/// in order of `i`, with consecutive duplicates removed.
fn clamped_line(center: &DVector<f64>, dir: &DVector<f64>, step: f64, reach: i64, c: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for i in -reach..=reach {
        let p = (center + dir * (i as f64 * step)).map(|v| v.clamp(c, 1.0 - c));
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// Multiples of `step` in `[lo, hi]`, or the midpoint when there are none.
fn multiples(step: f64, lo: f64, hi: f64) -> Vec<f64> {
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    let v: Vec<f64> = (first..=last).map(|k| k as f64 * step).collect();
    if v.is_empty() {
        vec![0.5 * (lo + hi)]
    } else {
        v
    }
}

fn mixture(weight: f64, p: DVector<f64>, q: DVector<f64>) -> Model {
    Model::ProductMixture(ProductMixtureModel {
        weight,
        component_p: BinaryProductModel { mean: p },
        component_q: BinaryProductModel { mean: q },
    })
}

#[cfg(test)]
fn drop_coordinate(v: &[f64], skip: usize) -> impl Iterator<Item = f64> + '_ {
    v.iter()
        .enumerate()
        .filter(move |&(j, _)| j != skip)
        .map(|(_, &x)| x)
}

fn insert_coordinate(v: &DVector<f64>, at: usize, value: f64) -> DVector<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.extend_from_slice(&v.as_slice()[..at]);
    out.push(value);
    out.extend_from_slice(&v.as_slice()[at..]);
    DVector::from_vec(out)
}

/// One step of the filter that conditions on an anchor coordinate `i_star`
/// where the component means are assumed to differ.
pub fn filter_anchor_step(i_star: usize, samples: &SampleSet, cfg: &MixtureConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    check_binary(samples)?;
    let d = samples.dim();
    if i_star >= d {
        return Err(Error::param(format!("anchor {i_star} out of range for d = {d}")));
    }
    if d < 2 {
        return Err(Error::param("anchor filter needs d >= 2"));
    }
    let n = samples.len();
    let x = samples.matrix();
    let rest = DMatrix::from_fn(d - 1, n, |r, c| x[(if r < i_star { r } else { r + 1 }, c)]);
    let rest = SampleSet::from_columns(rest)?;
    let mu = mean(&rest);
    let sigma = covariance(&rest, &mu);

    let ones: Vec<bool> = (0..n).map(|i| x[(i_star, i)] == 1.0).collect();
    let zeros: Vec<bool> = ones.iter().map(|b| !b).collect();
    let s1 = rest.retain(&ones);
    let s0 = rest.retain(&zeros);
    if s0.is_empty() || s1.is_empty() {
        return Err(Error::param(format!("coordinate {i_star} is constant on the samples")));
    }
    let u = mean(&s1) - mean(&s0);
    let u_norm = u.norm();

    let opts = EigenOptions::with_tol(cfg.eig_tol);
    let pair = if u_norm == 0.0 {
        Some(extreme_eigenpair(&sigma, Which::Largest, &[], &opts)?)
    } else if d - 1 >= 2 {
        Some(top_eigenpair_constrained(&sigma, &u, cfg.eig_tol)?)
    } else {
        // The complement of u in one dimension is trivial.
        None
    };
    let lambda = pair.as_ref().map_or(0.0, |p| p.value);
    let mut diag = Diagnostics {
        lambda_star: lambda,
        direction: pair.as_ref().map_or_else(Vec::new, |p| p.vector.as_slice().to_vec()),
        ..Default::default()
    };

    let g = cfg.grid();
    let c = cfg.balance;
    if lambda <= cfg.anchor_small_lambda {
        let line = if u_norm > 0.0 {
            let reach = (1.0 + (d as f64).sqrt() / g).floor() as i64;
            clamped_line(&mu, &(&u / u_norm), g, reach, c)
        } else {
            vec![mu.map(|v| v.clamp(c, 1.0 - c))]
        };
        let anchor_vals = multiples(g, c, 1.0 - c);
        let weights = multiples(g, 0.0, 1.0);
        let mut out = Vec::new();
        'grid: for a in &line {
            for b in &line {
                for &pa in &anchor_vals {
                    for &qa in &anchor_vals {
                        for &w in &weights {
                            if out.len() == cfg.candidate_cap {
                                break 'grid;
                            }
                            out.push(mixture(
                                w,
                                insert_coordinate(a, i_star, pa),
                                insert_coordinate(b, i_star, qa),
                            ));
                        }
                    }
                }
            }
        }
        return Ok(FilterOutcome {
            result: StepResult::Candidates(out),
            diagnostics: diag,
        });
    }

    let v = pair.expect("lambda > 0 implies an eigenpair").vector;
    let eps = cfg.epsilon;
    let delta = cfg.anchor_delta_c * (g * lambda.sqrt() + eps.powf(2.0 / 3.0) * cfg.log_inv_eps());
    diag.delta = delta;
    let offset = v.dot(&mu);
    let mags: Vec<f64> = rest
        .matrix()
        .tr_mul(&v)
        .iter()
        .map(|p| (p - offset).abs())
        .collect();
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let bound = |t: f64| 8.0 * (-t * t / 2.0).exp() + 8.0 * eps / d as f64;
    let Some(found) = tail_threshold_search(&sorted, delta, bound, 0.0, TailRule::Strict) else {
        return Err(Error::ViolatedAssumption {
            step: "filter_anchor_step",
            diagnostics: Box::new(diag),
        });
    };
    diag.threshold = Some(found.t);
    let keep: Vec<bool> = mags.iter().map(|&m| m <= found.cutoff).collect();
    Ok(FilterOutcome::reduced(samples, &keep, diag))
}

/// For every row `x`, the fraction of reference rows `Y` with
/// `|r·(x − Y)| < t`. The reference is every row when `budget ≥ N`, else a
/// seeded subsample of `budget` rows.
pub fn pairwise_tail_fraction(
    samples: &SampleSet,
    r: &DVector<f64>,
    t: f64,
    budget: usize,
    seed: Seed,
) -> Result<Vec<f64>> {
    let n = samples.len();
    if r.len() != samples.dim() {
        return Err(Error::param("direction has wrong dimension"));
    }
    if budget == 0 || budget > n {
        return Err(Error::param(format!("budget {budget} outside [1, {n}]")));
    }
    let proj: Vec<f64> = samples.matrix().tr_mul(r).iter().copied().collect();
    let reference = reference_projections(&proj, budget, seed);
    let b = reference.len() as f64;
    Ok(proj
        .iter()
        .map(|&a| {
            let hi = reference.partition_point(|&y| y < a + t);
            let lo = reference.partition_point(|&y| y <= a - t);
            hi.saturating_sub(lo) as f64 / b
        })
        .collect())
}

fn reference_projections(proj: &[f64], budget: usize, seed: Seed) -> Vec<f64> {
    let mut reference: Vec<f64> = if budget >= proj.len() {
        proj.to_vec()
    } else {
        let mut rng = seed.rng();
        sample_indices(&mut rng, proj.len(), budget)
            .into_iter()
            .map(|i| proj[i])
            .collect()
    };
    reference.sort_by(f64::total_cmp);
    reference
}

/// Distance from `a` to its `k`-th nearest value in sorted `reference`.
fn kth_distance(reference: &[f64], a: f64, k: usize) -> f64 {
    if k > reference.len() {
        return f64::INFINITY;
    }
    let mut right = reference.partition_point(|&y| y < a);
    let mut left = right;
    let mut last = 0.0;
    for _ in 0..k {
        let dl = if left > 0 { a - reference[left - 1] } else { f64::INFINITY };
        let dr = if right < reference.len() { reference[right] - a } else { f64::INFINITY };
        if dl <= dr {
            last = dl;
            left -= 1;
        } else {
            last = dr;
            right += 1;
        }
    }
    last
}

/// One step of the filter for mixtures whose component means are close in
/// every coordinate; `delta` is the assumed closeness.
pub fn filter_close_step(samples: &SampleSet, cfg: &MixtureConfig, delta: f64) -> Result<FilterOutcome> {
    cfg.validate()?;
    check_binary(samples)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta {delta} outside (0, 1)")));
    }
    let n = samples.len();
    if n < 2 {
        return Err(Error::param("close filter needs at least two samples"));
    }
    let d = samples.dim();
    let eps = cfg.epsilon;
    let mu = mean(samples);
    let cov0 = zero_diagonal(&covariance(samples, &mu));
    let large = eigenpairs_above(&cov0, cfg.close_c * delta * delta, 2, cfg.eig_tol)?;

    if large.len() <= 1 {
        let top = match large.into_iter().next() {
            Some(p) => p,
            None => top_eigenpair_abs(&cov0, cfg.eig_tol)?,
        };
        let diag = Diagnostics {
            lambda_star: top.value,
            direction: top.vector.as_slice().to_vec(),
            delta,
            ..Default::default()
        };
        let reach = (1.0 + (d as f64).sqrt() / delta).floor() as i64;
        let line = clamped_line(&mu, &top.vector, delta, reach, cfg.balance);
        let weights = multiples(eps, 10.0 * eps, 0.5);
        let mut out = Vec::new();
        'grid: for a in &line {
            for b in &line {
                for &w in &weights {
                    if out.len() == cfg.candidate_cap {
                        break 'grid;
                    }
                    out.push(mixture(w, a.clone(), b.clone()));
                }
            }
        }
        return Ok(FilterOutcome {
            result: StepResult::Candidates(out),
            diagnostics: diag,
        });
    }

    let (u_star, v_star) = (&large[0].vector, &large[1].vector);
    let mut diag = Diagnostics {
        lambda_star: large[0].value,
        delta,
        ..Default::default()
    };
    let t_min = 1.0 + 2.0 * cfg.log_inv_eps().sqrt();
    let bound = |t: f64| 12.0 * (-t * t / 4.0).exp() + 3.0 * eps / d as f64;
    let budget = cfg.census_budget.unwrap_or(n).clamp(1, n);
    // `Pr_Y(|r·(x − Y)| < t) < 2ε` holds exactly when fewer than `k` reference
    // rows lie within `t`, i.e. when the k-th nearest is at distance ≥ t.
    let k = (2.0 * eps * budget as f64).ceil().max(1.0) as usize;
    let step = delta * delta / d as f64;
    let angles = (std::f64::consts::PI / step).ceil() as usize;
    for a in 0..angles {
        let theta = a as f64 * step;
        let r = u_star * theta.cos() + v_star * theta.sin();
        let proj: Vec<f64> = samples.matrix().tr_mul(&r).iter().copied().collect();
        let reference = reference_projections(&proj, budget, cfg.seed.derive(&[a as u64]));
        let rho: Vec<f64> = proj.iter().map(|&p| kth_distance(&reference, p, k)).collect();
        let mut sorted = rho.clone();
        sorted.sort_by(f64::total_cmp);
        let candidates = std::iter::once(t_min).chain(sorted.iter().copied().filter(|&v| v > t_min));
        for t in candidates {
            let isolated = n - sorted.partition_point(|&v| v < t);
            if isolated == 0 {
                break;
            }
            if isolated as f64 / n as f64 > bound(t) {
                diag.threshold = Some(t);
                diag.direction = r.as_slice().to_vec();
                let keep: Vec<bool> = rho.iter().map(|&v| v < t).collect();
                return Ok(FilterOutcome::reduced(samples, &keep, diag));
            }
        }
    }
    Err(Error::ViolatedAssumption {
        step: "filter_close_step",
        diagnostics: Box::new(diag),
    })
}

/// Result of [`learn_product_mixture`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    pub model: ProductMixtureModel,
    /// Candidates emitted by the filters before rounding.
    pub candidates_emitted: usize,
    /// Distinct candidates after rounding to the grid.
    pub candidates_distinct: usize,
    /// Distinct candidates dropped by the pool cap.
    pub truncated: usize,
    /// Candidates entering the tournament.
    pub screened: usize,
    /// The tournament eliminated every candidate.
    pub flagged: bool,
    /// Fold boundaries `[0, a, b, N]`.
    pub folds: [usize; 4],
    pub steps: Vec<StepRecord>,
    /// Stages that failed, with their error messages.
    pub stage_errors: Vec<String>,
}

fn run_filter(
    fold: &SampleSet,
    cap: usize,
    steps: &mut Vec<StepRecord>,
    step: impl Fn(&SampleSet) -> Result<FilterOutcome>,
) -> Result<Vec<Model>> {
    let mut current = fold.clone();
    for _ in 0..cap {
        let out = step(&current)?;
        match out.result {
            StepResult::Candidates(c) => return Ok(c),
            StepResult::Estimate(m) => return Ok(vec![m]),
            StepResult::Reduced(next) => {
                steps.push(record(StepKind::Filter, out.diagnostics.lambda_star, &current, &next));
                if next.len() < 2 {
                    return Err(Error::Pathological("filter removed nearly every sample".into()));
                }
                current = next;
            }
        }
    }
    Ok(Vec::new())
}

fn model_key(m: &Model) -> Vec<u64> {
    match m {
        Model::ProductMixture(m) => std::iter::once(m.weight)
            .chain(m.component_p.mean.iter().copied())
            .chain(m.component_q.mean.iter().copied())
            .map(f64::to_bits)
            .collect(),
        other => other.mean().iter().map(|v| v.to_bits()).collect(),
    }
}

/// Keeps the `keep` candidates closest to the data: smallest L1 distance to
/// the empirical pattern frequencies when `d` is small enough to enumerate,
/// else largest mean log-likelihood on a prefix of the samples.
fn prescreen(pool: Vec<Model>, samples: &SampleSet, keep: usize) -> Result<Vec<Model>> {
    if pool.len() <= keep {
        return Ok(pool);
    }
    let d = samples.dim();
    let scores: Vec<f64> = if d <= MAX_ENUM_DIM {
        let mut hist = vec![0.0; 1 << d];
        let inv = 1.0 / samples.len() as f64;
        for x in samples.points() {
            hist[pattern_index(x)] += inv;
        }
        pool.iter()
            .map(|m| {
                let t = mass_table(m)?;
                Ok(t.iter().zip(&hist).map(|(a, b)| (a - b).abs()).sum())
            })
            .collect::<Result<_>>()?
    } else {
        let probe: Vec<&[f64]> = samples.points().take(2000).collect();
        pool.iter()
            .map(|m| {
                let f = m.log_density_fn()?;
                Ok(-probe.iter().map(|x| f.eval(x)).sum::<f64>() / probe.len() as f64)
            })
            .collect::<Result<_>>()?
    };
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();
    let mut pool: Vec<Option<Model>> = pool.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| pool[i].take().expect("distinct")).collect())
}

/// Splits the samples into contiguous thirds, runs the balanced-product
/// filter, the anchor filter for every coordinate and the close filter on
/// one third each, and returns the tournament winner among all candidates.
pub fn learn_product_mixture(samples: &SampleSet, cfg: &MixtureConfig) -> Result<MixtureFit> {
    cfg.validate()?;
    check_binary(samples)?;
    let n = samples.len();
    if n < 6 {
        return Err(Error::param("need at least two samples per fold"));
    }
    let d = samples.dim();
    let eps = cfg.epsilon;
    let g = cfg.grid();
    let folds = samples.folds(3);
    let bounds = [0, n / 3, 2 * n / 3, n];
    let mut steps = Vec::new();
    let mut stage_errors = Vec::new();
    let mut emitted: Vec<Model> = Vec::new();

    let balanced_cfg = FilterConfig {
        max_iterations: Some(d + 1),
        eig_tol: cfg.eig_tol,
        ..FilterConfig::new((2.0 * g).min(0.49))
    };
    match learn_balanced_product(&folds[0], &balanced_cfg) {
        Ok(fit) => {
            steps.extend(fit.steps);
            emitted.push(Model::ProductMixture(ProductMixtureModel::single(fit.model)));
        }
        Err(e) => stage_errors.push(format!("balanced: {e}")),
    }
    for i_star in 0..d {
        match run_filter(&folds[1], d + 1, &mut steps, |s| filter_anchor_step(i_star, s, cfg)) {
            Ok(c) => emitted.extend(c),
            Err(e) => stage_errors.push(format!("anchor {i_star}: {e}")),
        }
    }
    match run_filter(&folds[2], d + 1, &mut steps, |s| filter_close_step(s, cfg, g)) {
        Ok(c) => emitted.extend(c),
        Err(e) => stage_errors.push(format!("close: {e}")),
    }

    let candidates_emitted = emitted.len();
    let mut seen = HashSet::new();
    let mut pool: Vec<Model> = Vec::new();
    for m in &emitted {
        let r = match round_model_to_grid(m, eps, d) {
            Model::BinaryProduct(p) => Model::ProductMixture(ProductMixtureModel::single(p)),
            other => other,
        };
        if seen.insert(model_key(&r)) {
            pool.push(r);
        }
    }
    drop(emitted);
    let candidates_distinct = pool.len();
    let truncated = candidates_distinct.saturating_sub(cfg.candidate_cap);
    pool.truncate(cfg.candidate_cap);
    if pool.is_empty() {
        return Err(Error::Pathological(format!(
            "no candidates were produced ({})",
            stage_errors.join("; ")
        )));
    }
    let pool = prescreen(pool, samples, cfg.prescreen)?;
    let screened = pool.len();
    let opts = TournamentOptions {
        mc: cfg.mc,
        ..TournamentOptions::new(eps, g, cfg.seed)
    };
    let out = tournament(&pool, samples, &opts)?;
    let Model::ProductMixture(model) = out.model else {
        unreachable!("pool holds mixtures only")
    };
    Ok(MixtureFit {
        model,
        candidates_emitted,
        candidates_distinct,
        truncated,
        screened,
        flagged: out.flagged,
        folds: bounds,
        steps,
        stage_errors,
    })
}

/// Convenience for the single-product view of a fold, used by tests.
#[cfg(test)]
fn drop_anchor(samples: &SampleSet, i_star: usize) -> Vec<Vec<f64>> {
    samples
        .points()
        .map(|p| drop_coordinate(p, i_star).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::tv_exact_small;
    use crate::models::sample_model;

    fn truth(p: &[f64], q: &[f64], w: f64) -> Model {
        mixture(w, DVector::from_column_slice(p), DVector::from_column_slice(q))
    }

    fn binary_rows(rows: &[Vec<f64>]) -> SampleSet {
        SampleSet::from_rows(rows).unwrap()
    }

    #[test]
    fn pairwise_fraction_matches_brute_force() {
        let m = truth(&[0.3, 0.7, 0.5], &[0.6, 0.2, 0.5], 0.4);
        let s = sample_model(&m, 300, Seed(4)).unwrap();
        let r = DVector::from_column_slice(&[0.6, -0.48, 0.64]);
        let t = 0.37;
        let got = pairwise_tail_fraction(&s, &r, t, s.len(), Seed(0)).unwrap();
        let proj: Vec<f64> = s.points().map(|x| x.iter().zip(r.iter()).map(|(a, b)| a * b).sum()).collect();
        for (i, &a) in proj.iter().enumerate() {
            let c = proj.iter().filter(|&&b| (a - b).abs() < t).count() as f64 / proj.len() as f64;
            assert_eq!(got[i], c);
        }
    }

    #[test]
    fn pairwise_fraction_edge_cases() {
        let s = binary_rows(&vec![vec![1.0, 0.0]; 10]);
        let r = DVector::from_column_slice(&[1.0, 0.0]);
        assert!(pairwise_tail_fraction(&s, &r, 0.1, 10, Seed(0)).unwrap().iter().all(|&f| f == 1.0));
        assert!(pairwise_tail_fraction(&s, &r, 0.1, 11, Seed(0)).is_err());
        let mut rows = vec![vec![0.0]; 30];
        rows.extend(vec![vec![1.0]; 70]);
        let s = binary_rows(&rows);
        let f = pairwise_tail_fraction(&s, &DVector::from_element(1, 1.0), 1e-6, 100, Seed(0)).unwrap();
        assert_eq!(f[0], 0.3);
        assert_eq!(f[99], 0.7);
        let sub = pairwise_tail_fraction(&s, &DVector::from_element(1, 1.0), 1e-6, 50, Seed(1)).unwrap();
        assert!((sub[0] + sub[99] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kth_distance_agrees_with_sorting() {
        let reference = [0.0f64, 0.5, 1.0, 1.2, 3.0];
        for &a in &[0.0f64, 0.7, 1.2, 5.0] {
            let mut ds: Vec<f64> = reference.iter().map(|r| (r - a).abs()).collect();
            ds.sort_by(f64::total_cmp);
            for k in 1..=5 {
                assert_eq!(kth_distance(&reference, a, k), ds[k - 1]);
            }
            assert_eq!(kth_distance(&reference, a, 6), f64::INFINITY);
        }
    }

    #[test]
    fn anchor_candidates_cover_truth() {
        let p = [0.7, 0.3, 0.6, 0.4, 0.7, 0.3, 0.6, 0.75];
        let q = [0.3, 0.7, 0.4, 0.6, 0.3, 0.7, 0.4, 0.25];
        let m = truth(&p, &q, 0.5);
        let s = sample_model(&m, 20_000, Seed(11)).unwrap();
        let cfg = MixtureConfig::new(0.005);
        let out = filter_anchor_step(7, &s, &cfg).unwrap();
        let StepResult::Candidates(c) = out.result else { panic!("expected candidates") };
        let best = c
            .iter()
            .map(|x| tv_exact_small(x, &m).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 0.3, "best candidate at TV {best}");
        assert!(c.iter().all(|x| match x {
            Model::ProductMixture(x) => x.component_p.mean.iter().chain(x.component_q.mean.iter()).all(|&v| (0.25..=0.75).contains(&v)),
            _ => false,
        }));
    }

    #[test]
    fn anchor_rejects_constant_coordinate() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64, 1.0]).collect();
        let s = binary_rows(&rows);
        assert!(filter_anchor_step(1, &s, &MixtureConfig::new(0.01)).is_err());
    }

    #[test]
    fn anchor_with_identical_conditionals_is_unconstrained() {
        // Coordinate 0 is independent of the rest, so u = 0 up to noise;
        // build it exactly by tiling a balanced block.
        let mut rows = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    rows.push(vec![a as f64, b as f64, c as f64]);
                }
            }
        }
        let s = binary_rows(&rows);
        let out = filter_anchor_step(0, &s, &MixtureConfig::new(0.01)).unwrap();
        assert!(matches!(out.result, StepResult::Candidates(_)));
        assert!((out.diagnostics.lambda_star - 0.25).abs() < 1e-9);
    }

    /// Clean rows from `model` with rows `0..k` overwritten by `patterns`
    /// in rotation.
    fn planted(model: &Model, n: usize, seed: u64, counts: &[(Vec<f64>, usize)]) -> SampleSet {
        let clean = sample_model(model, n, Seed(seed)).unwrap();
        let mut rows: Vec<Vec<f64>> = clean.points().map(<[f64]>::to_vec).collect();
        let mut mask = vec![false; n];
        let mut i = 0;
        for (pat, k) in counts {
            for _ in 0..*k {
                rows[i] = pat.clone();
                mask[i] = true;
                i += 1;
            }
        }
        binary_rows(&rows).with_mask(mask).unwrap()
    }

    #[test]
    fn anchor_filters_planted_cluster() {
        let d = 64;
        let mut p = vec![0.6; d];
        let mut q = vec![0.4; d];
        p[d - 1] = 0.75;
        q[d - 1] = 0.25;
        let m = truth(&p, &q, 0.5);
        // Two antipodal half-cubes on the non-anchor coordinates, both along
        // a direction orthogonal to p − q.
        let half = |first: bool| -> Vec<f64> {
            (0..d).map(|j| if j == d - 1 || ((j < 32) == first) { 1.0 } else { 0.0 }).collect()
        };
        let s = planted(&m, 4000, 2, &[(half(true), 200), (half(false), 200)]);
        let cfg = MixtureConfig {
            anchor_delta_c: 0.5,
            ..MixtureConfig::new(0.02)
        };
        let out = filter_anchor_step(d - 1, &s, &cfg).unwrap();
        let StepResult::Reduced(r) = out.result else { panic!("expected reduction") };
        let census = s.census_against(&r).unwrap();
        assert!(census.corrupt >= census.clean, "{census:?}");
    }

    #[test]
    fn close_filters_spread_clusters() {
        let d = 256;
        let m = Model::BinaryProduct(BinaryProductModel::new(DVector::from_element(d, 0.5)).unwrap());
        let pat = |f: &dyn Fn(usize) -> bool| -> Vec<f64> { (0..d).map(|j| f(j) as u8 as f64).collect() };
        let counts = [
            (pat(&|j| j < 128), 50),
            (pat(&|j| j >= 128), 50),
            (pat(&|j| j % 2 == 0), 30),
            (pat(&|j| j % 2 == 1), 30),
        ];
        let s = planted(&m, 3000, 6, &counts);
        let cfg = MixtureConfig {
            close_c: 1.0,
            ..MixtureConfig::new(0.01)
        };
        let out = filter_close_step(&s, &cfg, 0.2).unwrap();
        let StepResult::Reduced(r) = out.result else { panic!("expected reduction") };
        let census = s.census_against(&r).unwrap();
        assert!(census.corrupt >= census.clean, "{census:?}");
        assert!(census.corrupt > 0);
    }

    #[test]
    fn close_needs_two_rows() {
        let s = binary_rows(&[vec![1.0, 0.0]]);
        assert!(filter_close_step(&s, &MixtureConfig::new(0.01), 0.5).is_err());
    }

    #[test]
    fn drop_and_insert_round_trip() {
        let s = binary_rows(&[vec![1.0, 0.0, 1.0]]);
        let dropped = drop_anchor(&s, 1);
        assert_eq!(dropped, vec![vec![1.0, 1.0]]);
        let back = insert_coordinate(&DVector::from_vec(dropped[0].clone()), 1, 0.0);
        assert_eq!(back.as_slice(), s.point(0));
    }
}
