//! Experiment harness: a JSON-described grid of (dimension, corruption rate,
//! trial) points, each sampled, corrupted, estimated by every configured
//! estimator, and scored against the truth.
//!
//! All estimators at a grid point see the same corrupted data. The data seed
//! is `Seed(seed).derive(&[d, N, ε.to_bits(), trial])`, with purpose tags from
//! [`crate::rng::purpose`] below it, so a row does not depend on which other
//! points or estimators are in the config, nor on worker scheduling.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{corrupt_full, corrupt_oblivious, oblivious_noise, AdversaryKind, AdversarySpec};
use crate::baselines::{coordinate_median, empirical_mean, geometric_median};
use crate::convex::{learn_mean_convex, ConvexConfig};
use crate::distances::{tv_bound_products, tv_exact_small, tv_upper_gaussian_cov, MAX_ENUM_DIM};
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, StepRecord};
use crate::gaussian::{learn_gaussian, learn_gaussian_cov, learn_gaussian_mean, WHITEN_FLOOR};
use crate::linalg::{covariance, mean, sym_inv_sqrt};
use crate::mixture::{learn_product_mixture, MixtureConfig};
use crate::models::{sample_model, BinaryProductModel, GaussianModel, Model, ProductMixtureModel};
use crate::product::{empirical_frequencies, learn_balanced_product, learn_general_product};
use crate::rng::{purpose, Seed};
use crate::samples::{Census, SampleSet};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "BENCH_WORKERS";

/// Constant `k` of the covariance TV bound `min(1, k‖Σ^{-1/2}Σ̂Σ^{-1/2} − I‖_F)`.
pub const TV_COV_K: f64 = 1.5;

/// Tolerance handed to the geometric median.
pub const GEOMEDIAN_TOL: f64 = 1e-7;

/// Ground-truth model family. Random draws use the model seed and `d`, so the
/// truth is shared by all trials at the same dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `N(μ, Σ)`; `μ ∼ N(0, I)` when `random_mean`, and `Σ = Q diag(λ) Qᵀ`
    /// with Haar `Q` and `λ_i ∈ [1/2, 2]` when `random_covariance`.
    Gaussian {
        #[serde(default)]
        random_mean: bool,
        #[serde(default)]
        random_covariance: bool,
        #[serde(default)]
        seed: u64,
    },
    /// Every coordinate has mean `p`.
    Product { p: f64 },
    /// Means drawn uniformly from `[lo, hi]`.
    RandomProduct { lo: f64, hi: f64, seed: u64 },
    /// Means `1 − ε^{1/d}`, so the all-zero pattern has mass `ε`.
    RarePattern,
    /// Two products with means drawn uniformly from `[c, 1 − c]`.
    Mixture { weight: f64, c: f64, seed: u64 },
}

impl ModelSpec {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, ModelSpec::Gaussian { .. })
    }

    pub fn build(&self, d: usize, epsilon: f64) -> Result<Model> {
        if d == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        match *self {
            ModelSpec::Gaussian {
                random_mean,
                random_covariance,
                seed,
            } => {
                let mut rng = Seed(seed).derive(&[purpose::MODEL, d as u64]).rng();
                let mu = if random_mean {
                    DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng))
                } else {
                    DVector::zeros(d)
                };
                let sigma = if random_covariance {
                    random_covariance_matrix(d, &mut rng)
                } else {
                    DMatrix::identity(d, d)
                };
                Ok(Model::Gaussian(GaussianModel::new(mu, sigma)?))
            }
            ModelSpec::Product { p } => Ok(Model::BinaryProduct(BinaryProductModel::new(
                DVector::from_element(d, p),
            )?)),
            ModelSpec::RandomProduct { lo, hi, seed } => {
                if !(0.0..=hi).contains(&lo) || hi > 1.0 {
                    return Err(Error::param("need 0 ≤ lo ≤ hi ≤ 1"));
                }
                let mut rng = Seed(seed).derive(&[purpose::MODEL, d as u64]).rng();
                let p = DVector::from_fn(d, |_, _| lo + (hi - lo) * rng.random::<f64>());
                Ok(Model::BinaryProduct(BinaryProductModel::new(p)?))
            }
            ModelSpec::RarePattern => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(Error::param("rare-pattern model needs 0 < ε < 1"));
                }
                let p = 1.0 - epsilon.powf(1.0 / d as f64);
                Ok(Model::BinaryProduct(BinaryProductModel::new(
                    DVector::from_element(d, p),
                )?))
            }
            ModelSpec::Mixture { weight, c, seed } => {
                if !(0.0..0.5).contains(&c) {
                    return Err(Error::param("balance c must lie in [0, 1/2)"));
                }
                let mut rng = Seed(seed).derive(&[purpose::MODEL, d as u64]).rng();
                let mut comp = || {
                    let p = DVector::from_fn(d, |_, _| c + (1.0 - 2.0 * c) * rng.random::<f64>());
                    BinaryProductModel::new(p)
                };
                let (p, q) = (comp()?, comp()?);
                Ok(Model::ProductMixture(ProductMixtureModel::new(weight, p, q)?))
            }
        }
    }
}

pub(crate) fn random_covariance_matrix(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| -> f64 { StandardNormal.sample(rng) });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // Sign-fix the columns so Q is Haar distributed.
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let lambda = DVector::from_fn(d, |_, _| 0.5 + 1.5 * rng.random::<f64>());
    let s = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// Sample count at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NRule {
    /// One count for every dimension, or one per entry of `dims`.
    Fixed(Vec<usize>),
    /// `⌈multiplier · d / ε²⌉`, optionally capped.
    Scaled {
        multiplier: f64,
        #[serde(default)]
        cap: Option<usize>,
    },
}

impl NRule {
    fn validate(&self, dims: usize) -> Result<()> {
        match self {
            NRule::Fixed(v) => {
                if v.is_empty() || (v.len() != 1 && v.len() != dims) {
                    return Err(Error::param("fixed n_rule needs one count or one per dimension"));
                }
                if v.contains(&0) {
                    return Err(Error::param("sample counts must be positive"));
                }
            }
            NRule::Scaled { multiplier, cap } => {
                if !(*multiplier > 0.0 && multiplier.is_finite()) || *cap == Some(0) {
                    return Err(Error::param("scaled n_rule needs a positive multiplier and cap"));
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, dim_index: usize, d: usize, epsilon: f64) -> usize {
        match self {
            NRule::Fixed(v) => v[if v.len() == 1 { 0 } else { dim_index }],
            NRule::Scaled { multiplier, cap } => {
                let eps = if epsilon > 0.0 { epsilon } else { 1.0 };
                let n = (multiplier * d as f64 / (eps * eps)).ceil() as usize;
                cap.map_or(n, |c| n.min(c)).max(1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    EmpiricalMean,
    CoordinateMedian,
    GeometricMedian,
    EmpiricalCovariance,
    LearnGaussianMean,
    LearnGaussianCov,
    LearnGaussian,
    LearnMeanConvex,
    EmpiricalProduct,
    LearnBalancedProduct,
    LearnGeneralProduct,
    LearnProductMixture,
}

impl Estimator {
    pub const ALL: [Estimator; 12] = [
        Estimator::EmpiricalMean,
        Estimator::CoordinateMedian,
        Estimator::GeometricMedian,
        Estimator::EmpiricalCovariance,
        Estimator::LearnGaussianMean,
        Estimator::LearnGaussianCov,
        Estimator::LearnGaussian,
        Estimator::LearnMeanConvex,
        Estimator::EmpiricalProduct,
        Estimator::LearnBalancedProduct,
        Estimator::LearnGeneralProduct,
        Estimator::LearnProductMixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::EmpiricalMean => "empirical_mean",
            Estimator::CoordinateMedian => "coordinate_median",
            Estimator::GeometricMedian => "geometric_median",
            Estimator::EmpiricalCovariance => "empirical_covariance",
            Estimator::LearnGaussianMean => "learn_gaussian_mean",
            Estimator::LearnGaussianCov => "learn_gaussian_cov",
            Estimator::LearnGaussian => "learn_gaussian",
            Estimator::LearnMeanConvex => "learn_mean_convex",
            Estimator::EmpiricalProduct => "empirical_product",
            Estimator::LearnBalancedProduct => "learn_balanced_product",
            Estimator::LearnGeneralProduct => "learn_general_product",
            Estimator::LearnProductMixture => "learn_product_mixture",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Estimator::EmpiricalMean => "sample mean",
            Estimator::CoordinateMedian => "per-coordinate lower median",
            Estimator::GeometricMedian => "Weiszfeld geometric median",
            Estimator::EmpiricalCovariance => "sample mean and covariance",
            Estimator::LearnGaussianMean => "filter for the mean of N(mu, I)",
            Estimator::LearnGaussianCov => "filter for the covariance of N(0, Sigma)",
            Estimator::LearnGaussian => "pair differences, covariance filter, whitened mean filter",
            Estimator::LearnMeanConvex => "separation oracle with a projected cutting-plane driver",
            Estimator::EmpiricalProduct => "empirical coordinate frequencies",
            Estimator::LearnBalancedProduct => "filter for a balanced binary product",
            Estimator::LearnGeneralProduct => "filter for an arbitrary binary product",
            Estimator::LearnProductMixture => "filters, candidate grid and tournament for two products",
        }
    }

    pub fn parse(name: &str) -> Result<Estimator> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::param(format!("unknown estimator {name:?}")))
    }
}

/// One experiment grid. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub dims: Vec<usize>,
    pub n_rule: NRule,
    pub epsilons: Vec<f64>,
    /// `null` runs on clean samples.
    pub adversary: Option<AdversarySpec>,
    pub estimators: Vec<String>,
    pub trials: usize,
    pub seed: u64,
    /// Overrides of the filter defaults; `epsilon` is replaced per point.
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub mixture: MixtureConfig,
    #[serde(default)]
    pub convex: ConvexConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks every axis and resolves every estimator name.
    pub fn validate(&self) -> Result<Vec<Estimator>> {
        if self.dims.is_empty() || self.epsilons.is_empty() || self.estimators.is_empty() {
            return Err(Error::param("dims, epsilons and estimators must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if self.dims.contains(&0) {
            return Err(Error::param("dimensions must be positive"));
        }
        for &e in &self.epsilons {
            if !(0.0..0.5).contains(&e) {
                return Err(Error::param(format!("epsilon {e} outside [0, 1/2)")));
            }
        }
        self.n_rule.validate(self.dims.len())?;
        if let Some(adv) = &self.adversary {
            for &d in &self.dims {
                adv.validate(d)?;
            }
        }
        let ests: Vec<Estimator> = self
            .estimators
            .iter()
            .map(|n| Estimator::parse(n))
            .collect::<Result<_>>()?;
        for &e in &self.epsilons {
            let probe = if e > 0.0 { e } else { 0.01 };
            self.filter.with_epsilon(probe).validate()?;
        }
        Ok(ests)
    }

    pub fn adversary_label(&self) -> String {
        self.adversary.as_ref().map_or_else(|| "none".to_string(), AdversarySpec::label)
    }
}

/// A CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: f64,
    pub adversary: String,
    pub estimator: String,
    pub trial: usize,
    pub l2_mean_error: f64,
    /// `NaN` for estimators that do not estimate a covariance.
    pub cov_frobenius_error: f64,
    pub tv_upper: f64,
    pub iterations: usize,
    pub removed_corrupt: usize,
    pub removed_clean: usize,
    pub converged: bool,
    pub violated_assumption: bool,
    pub wall_time_ms: u64,
}

/// A row together with the step log of the estimator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub result: TrialResult,
    pub steps: Vec<StepRecord>,
    /// Error text when the estimator failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepOptions {
    /// Record wall time; off by default so rows are reproducible.
    pub timing: bool,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
}

impl SweepOptions {
    /// Reads the worker count from [`WORKERS_ENV`].
    pub fn from_env(timing: bool) -> Result<Self> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let n: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::param(format!("{WORKERS_ENV}={v:?} is not a count")))?;
                (n > 0).then_some(n)
            }
            Err(_) => None,
        };
        Ok(SweepOptions { timing, workers })
    }
}

/// What an estimator produced, before scoring.
struct Estimate {
    mean: DVector<f64>,
    covariance: Option<DMatrix<f64>>,
    model: Option<Model>,
    iterations: usize,
    converged: bool,
    steps: Vec<StepRecord>,
}

impl Estimate {
    fn mean_only(mean: DVector<f64>) -> Self {
        Estimate {
            mean,
            covariance: None,
            model: None,
            iterations: 0,
            converged: true,
            steps: Vec::new(),
        }
    }

    fn from_fit(fit: crate::filter::Fit<GaussianModel>, with_cov: bool) -> Self {
        Estimate {
            mean: fit.model.mean,
            covariance: with_cov.then_some(fit.model.covariance),
            model: None,
            iterations: fit.iterations,
            converged: fit.converged,
            steps: fit.steps,
        }
    }

    fn from_product(fit: crate::filter::Fit<BinaryProductModel>) -> Self {
        Estimate {
            mean: fit.model.mean.clone(),
            covariance: None,
            model: Some(Model::BinaryProduct(fit.model)),
            iterations: fit.iterations,
            converged: fit.converged,
            steps: fit.steps,
        }
    }
}

fn run_estimator(
    est: Estimator,
    samples: &SampleSet,
    epsilon: f64,
    cfg: &ExperimentConfig,
    seed: Seed,
) -> Result<Estimate> {
    // The filters need ε > 0; clean runs use a small nominal rate.
    let eps = if epsilon > 0.0 { epsilon } else { 0.01 };
    let filter = cfg.filter.with_epsilon(eps);
    Ok(match est {
        Estimator::EmpiricalMean => Estimate::mean_only(empirical_mean(samples)?),
        Estimator::CoordinateMedian => Estimate::mean_only(coordinate_median(samples)?),
        Estimator::GeometricMedian => {
            let g = geometric_median(samples, GEOMEDIAN_TOL)?;
            Estimate {
                iterations: g.iterations,
                converged: g.converged,
                ..Estimate::mean_only(g.point)
            }
        }
        Estimator::EmpiricalCovariance => {
            let mu = mean(samples);
            let sigma = covariance(samples, &mu);
            Estimate {
                covariance: Some(sigma),
                ..Estimate::mean_only(mu)
            }
        }
        Estimator::LearnGaussianMean => Estimate::from_fit(learn_gaussian_mean(samples, &filter)?, false),
        Estimator::LearnGaussianCov => Estimate::from_fit(learn_gaussian_cov(samples, &filter)?, true),
        Estimator::LearnGaussian => Estimate::from_fit(learn_gaussian(samples, &filter)?, true),
        Estimator::LearnMeanConvex => {
            let fit = learn_mean_convex(samples, &filter, &cfg.convex)?;
            Estimate {
                iterations: fit.iterations,
                converged: fit.converged,
                steps: fit.steps,
                ..Estimate::mean_only(fit.model.mean)
            }
        }
        Estimator::EmpiricalProduct => {
            let p = empirical_frequencies(samples);
            Estimate {
                model: Some(Model::BinaryProduct(BinaryProductModel::new(p.clone())?)),
                ..Estimate::mean_only(p)
            }
        }
        Estimator::LearnBalancedProduct => Estimate::from_product(learn_balanced_product(samples, &filter)?),
        Estimator::LearnGeneralProduct => Estimate::from_product(learn_general_product(samples, &filter)?),
        Estimator::LearnProductMixture => {
            let mcfg = MixtureConfig {
                epsilon: eps,
                seed,
                ..cfg.mixture.clone()
            };
            let fit = learn_product_mixture(samples, &mcfg)?;
            Estimate {
                mean: fit.model.mean(),
                covariance: None,
                model: Some(Model::ProductMixture(fit.model)),
                iterations: fit.steps.len(),
                converged: !fit.flagged,
                steps: fit.steps,
            }
        }
    })
}

struct Scores {
    l2: f64,
    cov: f64,
    tv: f64,
}

fn score(truth: &Model, est: &Estimate) -> Result<Scores> {
    let mu = truth.mean();
    let l2 = (&est.mean - &mu).norm();
    match truth {
        Model::Gaussian(g) => {
            let w = sym_inv_sqrt(&g.covariance, WHITEN_FLOOR)?;
            let mean_tv = (0.5 * (&w * (&est.mean - &g.mean)).norm()).min(1.0);
            let (cov, cov_tv) = match &est.covariance {
                Some(s) => {
                    let m = &w * s * &w;
                    let err = (m - DMatrix::identity(g.dim(), g.dim())).norm();
                    (err, tv_upper_gaussian_cov(s, &g.covariance, TV_COV_K)?)
                }
                None => (f64::NAN, 0.0),
            };
            Ok(Scores {
                l2,
                cov,
                tv: (mean_tv + cov_tv).min(1.0),
            })
        }
        Model::BinaryProduct(p) => {
            let q = est.mean.map(|v| v.clamp(0.0, 1.0));
            Ok(Scores {
                l2,
                cov: f64::NAN,
                tv: tv_bound_products(&q, &p.mean),
            })
        }
        Model::ProductMixture(_) => {
            let tv = match &est.model {
                Some(m) if truth.dim() <= MAX_ENUM_DIM => tv_exact_small(m, truth)?,
                _ if truth.dim() <= MAX_ENUM_DIM => {
                    let q = est.mean.map(|v| v.clamp(0.0, 1.0));
                    tv_exact_small(&Model::BinaryProduct(BinaryProductModel::new(q)?), truth)?
                }
                _ => f64::NAN,
            };
            Ok(Scores { l2, cov: f64::NAN, tv })
        }
    }
}

/// A grid point: indices into the config axes plus the trial number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub dim_index: usize,
    pub eps_index: usize,
    pub trial: usize,
}

impl ExperimentConfig {
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for dim_index in 0..self.dims.len() {
            for eps_index in 0..self.epsilons.len() {
                for trial in 0..self.trials {
                    out.push(GridPoint {
                        dim_index,
                        eps_index,
                        trial,
                    });
                }
            }
        }
        out
    }

    /// The seed of a grid point, hashed from `(d, N, ε bits, trial)`.
    pub fn point_seed(&self, p: GridPoint) -> Seed {
        let d = self.dims[p.dim_index];
        let eps = self.epsilons[p.eps_index];
        let n = self.n_rule.count(p.dim_index, d, eps);
        Seed(self.seed).derive(&[d as u64, n as u64, eps.to_bits(), p.trial as u64])
    }

    /// Truth and corrupted samples at a grid point.
    pub fn generate(&self, p: GridPoint) -> Result<(Model, SampleSet)> {
        let d = self.dims[p.dim_index];
        let eps = self.epsilons[p.eps_index];
        let n = self.n_rule.count(p.dim_index, d, eps);
        let seed = self.point_seed(p);
        let truth = self.model.build(d, eps)?;
        let corrupt_seed = seed.derive(&[purpose::CORRUPT]);
        let samples = match (&self.adversary, eps > 0.0) {
            (Some(adv), true) if adv.kind == AdversaryKind::Oblivious => {
                let noise = oblivious_noise(adv, &truth.mean(), eps)?;
                corrupt_oblivious(&truth, &noise, eps, n, corrupt_seed)?.0
            }
            (Some(adv), true) => {
                let clean = sample_model(&truth, n, seed.derive(&[purpose::SAMPLE]))?;
                corrupt_full(&clean, eps, adv, corrupt_seed)?.0
            }
            _ => {
                let clean = sample_model(&truth, n, seed.derive(&[purpose::SAMPLE]))?;
                let len = clean.len();
                clean.with_mask(vec![false; len])?
            }
        };
        Ok((truth, samples))
    }
}

fn run_point(cfg: &ExperimentConfig, ests: &[Estimator], p: GridPoint, timing: bool) -> Result<Vec<TrialRecord>> {
    let d = cfg.dims[p.dim_index];
    let eps = cfg.epsilons[p.eps_index];
    let (truth, samples) = cfg.generate(p)?;
    let est_seed = cfg.point_seed(p).derive(&[purpose::ESTIMATE]);
    let adversary = cfg.adversary_label();
    let mut out = Vec::with_capacity(ests.len());
    for &e in ests {
        let start = Instant::now();
        let res = run_estimator(e, &samples, eps, cfg, est_seed);
        let elapsed = start.elapsed().as_millis() as u64;
        let mut row = TrialResult {
            d,
            n: samples.len(),
            epsilon: eps,
            adversary: adversary.clone(),
            estimator: e.name().to_string(),
            trial: p.trial,
            l2_mean_error: f64::NAN,
            cov_frobenius_error: f64::NAN,
            tv_upper: f64::NAN,
            iterations: 0,
            removed_corrupt: 0,
            removed_clean: 0,
            converged: false,
            violated_assumption: false,
            wall_time_ms: if timing { elapsed } else { 0 },
        };
        let (steps, error) = match res.and_then(|est| score(&truth, &est).map(|s| (est, s))) {
            Ok((est, s)) => {
                let removed = est.steps.iter().fold(Census::default(), |acc, st| {
                    let c = st.census.unwrap_or_default();
                    Census {
                        corrupt: acc.corrupt + c.corrupt,
                        clean: acc.clean + c.clean,
                    }
                });
                row.l2_mean_error = s.l2;
                row.cov_frobenius_error = s.cov;
                row.tv_upper = s.tv;
                row.iterations = est.iterations;
                row.removed_corrupt = removed.corrupt;
                row.removed_clean = removed.clean;
                row.converged = est.converged;
                (est.steps, None)
            }
            Err(err) => {
                row.violated_assumption = err.is_violated_assumption();
                (Vec::new(), Some(err.to_string()))
            }
        };
        out.push(TrialRecord {
            result: row,
            steps,
            error,
        });
    }
    Ok(out)
}

/// Runs every grid point and returns rows ordered by dimension, corruption
/// rate, estimator (config order), then trial.
pub fn run_sweep_records(cfg: &ExperimentConfig, opts: SweepOptions) -> Result<Vec<TrialRecord>> {
    let ests = cfg.validate()?;
    let points = cfg.points();
    let work = || -> Result<Vec<(GridPoint, Vec<TrialRecord>)>> {
        points
            .par_iter()
            .map(|&p| run_point(cfg, &ests, p, opts.timing).map(|r| (p, r)))
            .collect()
    };
    let mut done = match opts.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::param(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    done.sort_by_key(|(p, _)| (p.dim_index, p.eps_index, p.trial));
    let mut keyed: Vec<((usize, usize, usize, usize), TrialRecord)> = Vec::new();
    for (p, recs) in done {
        for (k, r) in recs.into_iter().enumerate() {
            keyed.push(((p.dim_index, p.eps_index, k, p.trial), r));
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

/// Runs a single grid point for every configured estimator.
pub fn run_trial(cfg: &ExperimentConfig, p: GridPoint) -> Result<Vec<TrialResult>> {
    let ests = cfg.validate()?;
    Ok(run_point(cfg, &ests, p, false)?.into_iter().map(|r| r.result).collect())
}

pub fn run_sweep(cfg: &ExperimentConfig, opts: SweepOptions) -> Result<Vec<TrialResult>> {
    Ok(run_sweep_records(cfg, opts)?.into_iter().map(|r| r.result).collect())
}

pub fn write_csv<W: Write>(rows: &[TrialResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::Strategy;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec::Gaussian {
                random_mean: false,
                random_covariance: false,
                seed: 0,
            },
            dims: vec![4],
            n_rule: NRule::Fixed(vec![2000]),
            epsilons: vec![0.1],
            adversary: Some(AdversarySpec::full(Strategy::MeanShift)),
            estimators: vec!["empirical_mean".into()],
            trials: 1,
            seed: 7,
            filter: FilterConfig::default(),
            mixture: MixtureConfig::default(),
            convex: ConvexConfig::default(),
        }
    }

    #[test]
    fn config_rejects_unknown_fields_and_names() {
        let ok = r#"{"model":{"kind":"product","p":0.5},"dims":[8],"n_rule":{"scaled":{"multiplier":1}},
            "epsilons":[0.1],"adversary":null,"estimators":["empirical_mean"],"trials":1,"seed":0}"#;
        assert!(ExperimentConfig::from_json(ok).is_ok());
        let extra = ok.replace("\"seed\":0}", "\"seed\":0,\"colour\":1}");
        assert!(ExperimentConfig::from_json(&extra).is_err());
        let bad = ok.replace("empirical_mean", "mystery");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad_filter = ok.replace("\"seed\":0}", "\"seed\":0,\"filter\":{\"c_prune\":1,\"x\":2}}");
        assert!(ExperimentConfig::from_json(&bad_filter).is_err());
    }

    #[test]
    fn grid_size_and_order() {
        let mut cfg = base();
        cfg.dims = vec![3, 2];
        cfg.epsilons = vec![0.05, 0.1];
        cfg.estimators = vec!["empirical_mean".into(), "coordinate_median".into()];
        cfg.trials = 3;
        cfg.n_rule = NRule::Fixed(vec![300]);
        let rows = run_sweep(&cfg, SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2 * 3);
        assert_eq!(rows[0].d, 3);
        assert_eq!(rows[0].estimator, "empirical_mean");
        assert_eq!(rows[3].estimator, "coordinate_median");
        assert_eq!(rows[6].epsilon, 0.1);
        assert_eq!(rows[12].d, 2);
        assert!(rows.iter().all(|r| r.wall_time_ms == 0));
    }

    #[test]
    fn single_point_is_one_row_and_reproducible() {
        let cfg = base();
        let a = run_sweep(&cfg, SweepOptions::default()).unwrap();
        let b = run_sweep(&cfg, SweepOptions { timing: false, workers: Some(2) }).unwrap();
        assert_eq!(a.len(), 1);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_csv(&a, &mut x).unwrap();
        write_csv(&b, &mut y).unwrap();
        assert_eq!(x, y);
        let header = String::from_utf8(x).unwrap();
        assert!(header.starts_with(
            "d,N,epsilon,adversary,estimator,trial,l2_mean_error,cov_frobenius_error,tv_upper,\
             iterations,removed_corrupt,removed_clean,converged,violated_assumption,wall_time_ms\n"
        ));
    }

    #[test]
    fn contamination_moves_empirical_mean() {
        // MeanShift places the drawn fraction (≈ ε) at distance s = √d.
        let cfg = base();
        let row = &run_trial(&cfg, GridPoint { dim_index: 0, eps_index: 0, trial: 0 }).unwrap()[0];
        let s = 2.0;
        assert!(row.l2_mean_error >= 0.5 * 0.1 * s, "{}", row.l2_mean_error);
    }

    #[test]
    fn clean_filter_matches_empirical() {
        let mut cfg = base();
        cfg.epsilons = vec![0.0];
        cfg.adversary = None;
        cfg.dims = vec![8];
        cfg.n_rule = NRule::Fixed(vec![20_000]);
        cfg.estimators = vec!["empirical_mean".into(), "learn_gaussian_mean".into()];
        let rows = run_trial(&cfg, GridPoint { dim_index: 0, eps_index: 0, trial: 0 }).unwrap();
        assert!(rows[1].converged);
        assert_eq!(rows[1].removed_clean + rows[1].removed_corrupt, 0);
        assert!((rows[1].l2_mean_error - rows[0].l2_mean_error).abs() < 1e-9);
    }

    #[test]
    fn estimator_failures_become_flags() {
        let mut cfg = base();
        cfg.estimators = vec!["learn_balanced_product".into()];
        let row = &run_sweep(&cfg, SweepOptions::default()).unwrap()[0];
        assert!(!row.converged);
        assert!(row.l2_mean_error.is_nan());
    }

    #[test]
    fn model_builders() {
        let m = ModelSpec::RarePattern.build(8, 0.01).unwrap();
        let Model::BinaryProduct(p) = &m else { panic!() };
        let zero_mass: f64 = p.mean.iter().map(|v| 1.0 - v).product();
        assert!((zero_mass - 0.01).abs() < 1e-12);
        let g = ModelSpec::Gaussian { random_mean: true, random_covariance: true, seed: 3 }
            .build(5, 0.1)
            .unwrap();
        let Model::Gaussian(g) = g else { panic!() };
        let eig = g.covariance.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| (0.5 - 1e-9..=2.0 + 1e-9).contains(&l)));
        let again = ModelSpec::Gaussian { random_mean: true, random_covariance: true, seed: 3 }
            .build(5, 0.2)
            .unwrap();
        assert_eq!(Model::Gaussian(g), again);
    }

    #[test]
    fn n_rule_scaling() {
        let r = NRule::Scaled { multiplier: 10.0, cap: Some(50_000) };
        assert_eq!(r.count(0, 16, 0.1), 16_000);
        assert_eq!(r.count(0, 256, 0.1), 50_000);
        assert_eq!(NRule::Fixed(vec![5, 6]).count(1, 3, 0.1), 6);
    }
}
