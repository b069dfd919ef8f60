//! Filter-based robust learning of Gaussians: pruning, the identity-covariance
//! mean filter, the zero-mean covariance filter with its degree-2 polynomial
//! search, and the pipeline for an arbitrary Gaussian.

use nalgebra::{DMatrix, DVector};

use crate::baselines::coordinate_median;
use crate::error::{Error, Result};
use crate::filter::{
    lower_median, tail_threshold_search, Diagnostics, FilterConfig, FilterOutcome, Fit,
    StepKind, StepRecord, StepResult, TailRule,
};
use crate::linalg::{
    covariance, extreme_eigenpair, flatten, mean, second_moment, sym_inv_sqrt, sym_sqrt,
    symmetrize, top_eigenpair_abs, EigenOptions, EvenQuadratic, SymmetricOperator, Which, CHUNK,
};
use crate::models::{GaussianModel, Model};
use crate::samples::SampleSet;

/// Relative eigenvalue floor used when whitening.
pub const WHITEN_FLOOR: f64 = 1e-12;

pub(crate) fn record(kind: StepKind, lambda_star: f64, before: &SampleSet, after: &SampleSet) -> StepRecord {
    StepRecord {
        kind,
        lambda_star,
        removed: before.len() - after.len(),
        census: before.census_against(after),
    }
}

/// Removes every sample farther than `√(c_prune · d · ln(N/τ))` from more
/// than `2εN` of the others.
///
/// Distances are certified through radii around the coordinate median
/// (`|r_i − r_j| ≤ ‖x_i − x_j‖ ≤ r_i + r_j`), so only samples whose status the
/// radii cannot settle are compared against every other sample.
pub fn naive_prune(samples: &SampleSet, cfg: &FilterConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::param("pruning needs at least two samples"));
    }
    let d = samples.dim();
    let radius_sq = cfg.c_prune * d as f64 * (n as f64 / cfg.tau).ln();
    let radius = radius_sq.sqrt();
    let limit = 2.0 * cfg.epsilon * n as f64;

    let center = coordinate_median(samples)?;
    let radii: Vec<f64> = samples
        .points()
        .map(|p| {
            p.iter()
                .zip(center.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut sorted = radii.clone();
    sorted.sort_by(f64::total_cmp);

    let keep: Vec<bool> = (0..n)
        .map(|i| {
            let r = radii[i];
            let surely_close = sorted.partition_point(|&s| r + s <= radius);
            let surely_far = sorted.partition_point(|&s| s < r - radius)
                + (n - sorted.partition_point(|&s| s <= r + radius));
            if ((n - surely_close) as f64) <= limit {
                return true;
            }
            if surely_far as f64 > limit {
                return false;
            }
            let x = samples.point(i);
            let far = samples
                .points()
                .filter(|y| {
                    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() > radius_sq
                })
                .count();
            far as f64 <= limit
        })
        .collect();
    if keep.iter().all(|&k| !k) {
        return Err(Error::Pathological("pruning removed every sample".into()));
    }
    Ok(samples.retain(&keep))
}

/// `|v · (x_i − μ)|` for every sample.
fn projections(samples: &SampleSet, v: &DVector<f64>, center: &DVector<f64>) -> Vec<f64> {
    let offset = v.dot(center);
    samples
        .matrix()
        .tr_mul(v)
        .iter()
        .map(|p| (p - offset).abs())
        .collect()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// One step of the identity-covariance mean filter.
pub fn filter_mean_step(samples: &SampleSet, cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    let d = samples.dim();
    let eps = cfg.epsilon;
    let mu = mean(samples);
    let mut m = covariance(samples, &mu);
    for i in 0..d {
        m[(i, i)] -= 1.0;
    }
    let pair = top_eigenpair_abs(&m, cfg.eig_tol)?;
    let lambda = pair.value.abs();
    let mut diag = Diagnostics {
        lambda_star: pair.value,
        direction: pair.vector.as_slice().to_vec(),
        ..Default::default()
    };
    if lambda <= cfg.c_spectral * eps * cfg.log_inv_eps() {
        return Ok(FilterOutcome::estimate(
            Model::Gaussian(GaussianModel {
                mean: mu,
                covariance: DMatrix::identity(d, d),
            }),
            diag,
        ));
    }
    let delta = 3.0 * (eps * lambda).sqrt();
    diag.delta = delta;
    let mags = projections(samples, &pair.vector, &mu);
    // ln(dε/τ) is negative when dε < τ; the floor keeps the bound meaningful.
    let log_term = (d as f64 * eps / cfg.tau).ln().max(1.0);
    let bound = |t: f64| 8.0 * (-t * t / 2.0).exp() + 8.0 * eps / (d as f64 * log_term);
    let Some(found) = tail_threshold_search(&sorted(&mags), delta, bound, 0.0, TailRule::Strict)
    else {
        return Err(Error::ViolatedAssumption {
            step: "filter_mean_step",
            diagnostics: Box::new(diag),
        });
    };
    diag.threshold = Some(found.t);
    let keep: Vec<bool> = mags.iter().map(|&m| m <= found.cutoff).collect();
    Ok(FilterOutcome::reduced(samples, &keep, diag))
}

fn default_mean_cap(d: usize, cfg: &FilterConfig) -> usize {
    let d = d.max(1) as f64;
    (2.0 * d * (d / (cfg.epsilon * cfg.tau)).ln()).ceil().max(1.0) as usize
}

/// Prunes once, then filters until the spectral test accepts.
///
/// Returns `N(μ̂, I)`. Hitting the iteration cap yields the mean of the
/// surviving samples with `converged = false`.
pub fn learn_gaussian_mean(samples: &SampleSet, cfg: &FilterConfig) -> Result<Fit<GaussianModel>> {
    cfg.validate()?;
    let d = samples.dim();
    match samples.len() {
        0 => return Err(Error::param("empty sample set")),
        1 => {
            return Ok(Fit {
                model: GaussianModel {
                    mean: DVector::from_column_slice(samples.point(0)),
                    covariance: DMatrix::identity(d, d),
                },
                converged: false,
                iterations: 0,
                steps: Vec::new(),
            })
        }
        _ => {}
    }
    let pruned = naive_prune(samples, cfg)?;
    let mut steps = vec![record(StepKind::Prune, f64::NAN, samples, &pruned)];
    let cap = cfg.max_iterations.unwrap_or_else(|| default_mean_cap(d, cfg));
    let mut current = pruned;
    for it in 1..=cap {
        let out = filter_mean_step(&current, cfg)?;
        match out.result {
            StepResult::Estimate(Model::Gaussian(g)) => {
                return Ok(Fit {
                    model: g,
                    converged: true,
                    iterations: it,
                    steps,
                })
            }
            StepResult::Reduced(next) => {
                if next.is_empty() {
                    return Err(Error::Pathological("filter removed every sample".into()));
                }
                steps.push(record(StepKind::Filter, out.diagnostics.lambda_star, &current, &next));
                current = next;
            }
            _ => unreachable!("mean filter emits estimates or reductions"),
        }
    }
    Ok(Fit {
        model: GaussianModel {
            mean: mean(&current),
            covariance: DMatrix::identity(d, d),
        },
        converged: false,
        iterations: cap,
        steps,
    })
}

/// The centered fourth-moment operator of whitened samples,
/// `V ↦ (1/N) Σ_i (y_iᵀ V y_i) y_i y_iᵀ − tr(V) I`, on flattened `d × d`
/// matrices. Its quadratic form is `E[(yᵀVy)²] − tr(V)²`, which equals
/// `E[(yᵀVy − tr V)²]` when the whitened second moment is the identity.
pub struct CenteredFourthOperator<'a> {
    y: &'a DMatrix<f64>,
}

impl<'a> CenteredFourthOperator<'a> {
    pub fn new(whitened: &'a DMatrix<f64>) -> Self {
        CenteredFourthOperator { y: whitened }
    }
}

impl SymmetricOperator for CenteredFourthOperator<'_> {
    fn dim(&self) -> usize {
        self.y.nrows() * self.y.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.y.nrows();
        let n = self.y.ncols();
        // Row-major flattening of V; the operator ignores the antisymmetric
        // part, so transposition conventions do not matter here.
        let v = symmetrize(&DMatrix::from_row_slice(d, d, x));
        let mut acc = DMatrix::zeros(d, d);
        let mut lo = 0;
        while lo < n {
            let hi = (lo + CHUNK).min(n);
            let yc = self.y.columns(lo, hi - lo);
            let vy = &v * &yc;
            let mut scaled = yc.clone_owned();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                let s = yc.column(k).dot(&vy.column(k));
                col *= s;
            }
            acc.gemm(1.0, &scaled, &yc.transpose(), 1.0);
            lo = hi;
        }
        acc /= n as f64;
        let tr = v.trace();
        for i in 0..d {
            acc[(i, i)] -= tr;
        }
        let acc = symmetrize(&acc);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = acc[(i, j)];
            }
        }
    }
}

/// Finds the even quadratic `p*` maximizing `Q_{S'}(p) / Q_{G'}(p)` for
/// `G' = N(0, Σ')`, normalized so that `Q_{G'}(p*) = 1`, and returns it with
/// `λ* = Q_{S'}(p*)`.
pub fn find_max_poly(
    samples: &SampleSet,
    sigma_prime: &DMatrix<f64>,
    cfg: &FilterConfig,
) -> Result<(EvenQuadratic, f64)> {
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    let d = samples.dim();
    let w = sym_inv_sqrt(sigma_prime, WHITEN_FLOOR)?;
    let y = &w * samples.matrix();
    let op = CenteredFourthOperator::new(&y);
    let opts = EigenOptions {
        tol: cfg.eig_tol,
        ..Default::default()
    };
    let pair = extreme_eigenpair(&op, Which::Largest, &[], &opts)?;
    let mut v = symmetrize(&DMatrix::from_row_slice(d, d, pair.vector.as_slice()));
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let quad = EvenQuadratic {
        offset: -v.trace() * s,
        quad: v * s,
        frame: w,
    };
    Ok((quad, 0.5 * pair.value))
}

/// One step of the zero-mean covariance filter.
pub fn filter_cov_step(samples: &SampleSet, cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    let n = samples.len();
    if n == 0 {
        return Err(Error::param("empty sample set"));
    }
    let d = samples.dim();
    let eps = cfg.epsilon;
    let sigma = second_moment(samples);
    let w = sym_inv_sqrt(&sigma, WHITEN_FLOOR)?;

    // Gross outliers in Mahalanobis norm.
    let gate = cfg.c_prune * d as f64 * (n as f64 / cfg.tau).ln();
    let maha: Vec<f64> = (&w * samples.matrix())
        .column_iter()
        .map(|c| c.norm_squared())
        .collect();
    if maha.iter().any(|&m| m >= gate) {
        let keep: Vec<bool> = maha.iter().map(|&m| m < gate).collect();
        let diag = Diagnostics {
            lambda_star: f64::NAN,
            threshold: Some(gate),
            ..Default::default()
        };
        return Ok(FilterOutcome::reduced(samples, &keep, diag));
    }

    let (p, lambda) = find_max_poly(samples, &sigma, cfg)?;
    let mut diag = Diagnostics {
        lambda_star: lambda,
        direction: flatten(&p.quad).as_slice().to_vec(),
        ..Default::default()
    };
    let log_inv = cfg.log_inv_eps();
    if lambda <= 1.0 + cfg.c_quadratic * eps * log_inv * log_inv {
        return Ok(FilterOutcome::estimate(
            Model::Gaussian(GaussianModel {
                mean: DVector::zeros(d),
                covariance: sigma,
            }),
            diag,
        ));
    }
    let values = p.eval_all(samples);
    let med = lower_median(&values);
    let mags: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let log_n = (n as f64 / cfg.tau).ln();
    let floor_term = 3.0 * eps / (d as f64 * log_n).powi(2);
    let bound = |t: f64| 12.0 * (-(t - 4.0 / 3.0)).exp() + floor_term;
    let Some(found) =
        tail_threshold_search(&sorted(&mags), 0.0, bound, cfg.c_tail_floor, TailRule::Inclusive)
    else {
        return Err(Error::ViolatedAssumption {
            step: "filter_cov_step",
            diagnostics: Box::new(diag),
        });
    };
    diag.threshold = Some(found.t);
    let keep: Vec<bool> = mags.iter().map(|&m| m < found.cutoff).collect();
    Ok(FilterOutcome::reduced(samples, &keep, diag))
}

/// Iterates [`filter_cov_step`]; returns a zero-mean Gaussian.
pub fn learn_gaussian_cov(samples: &SampleSet, cfg: &FilterConfig) -> Result<Fit<GaussianModel>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    let d = samples.dim();
    let cap = cfg.max_iterations.unwrap_or(4 * d * d).max(1);
    let mut current = samples.clone();
    let mut steps = Vec::new();
    for it in 1..=cap {
        let out = filter_cov_step(&current, cfg)?;
        match out.result {
            StepResult::Estimate(Model::Gaussian(g)) => {
                return Ok(Fit {
                    model: g,
                    converged: true,
                    iterations: it,
                    steps,
                })
            }
            StepResult::Reduced(next) => {
                if next.is_empty() {
                    return Err(Error::Pathological("filter removed every sample".into()));
                }
                steps.push(record(StepKind::Filter, out.diagnostics.lambda_star, &current, &next));
                current = next;
            }
            _ => unreachable!("covariance filter emits estimates or reductions"),
        }
    }
    Ok(Fit {
        model: GaussianModel {
            mean: DVector::zeros(d),
            covariance: second_moment(&current),
        },
        converged: false,
        iterations: cap,
        steps,
    })
}

/// Differences `(X_i − X_{N/2+i}) / √2`; a pair is marked corrupt when
/// either member is.
pub fn pair_differences(samples: &SampleSet) -> Result<SampleSet> {
    let half = samples.len() / 2;
    let d = samples.dim();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut data = DMatrix::zeros(d, half);
    for i in 0..half {
        let (a, b) = (samples.point(i), samples.point(half + i));
        for j in 0..d {
            data[(j, i)] = (a[j] - b[j]) * s;
        }
    }
    let out = SampleSet::from_columns(data)?;
    match samples.mask() {
        Some(m) => out.with_mask((0..half).map(|i| m[i] || m[half + i]).collect()),
        None => Ok(out),
    }
}

/// Covariance from pair differences (at corruption `2ε`), then the mean of
/// the whitened samples, then `N(Σ̂^{1/2} μ̂, Σ̂)`.
pub fn learn_gaussian(samples: &SampleSet, cfg: &FilterConfig) -> Result<Fit<GaussianModel>> {
    cfg.validate()?;
    if samples.len() < 4 {
        return Err(Error::param("need at least four samples"));
    }
    let pairs = pair_differences(samples)?;
    let cov_cfg = cfg.with_epsilon((2.0 * cfg.epsilon).min(0.49));
    let cov = learn_gaussian_cov(&pairs, &cov_cfg)?;
    let sigma = cov.model.covariance;
    let whiten = sym_inv_sqrt(&sigma, WHITEN_FLOOR)?;
    let whitened = samples.transform(&whiten)?;
    let mu = learn_gaussian_mean(&whitened, cfg)?;
    let mean = sym_sqrt(&sigma)? * mu.model.mean;
    let mut steps = cov.steps;
    steps.extend(mu.steps);
    Ok(Fit {
        model: GaussianModel {
            mean,
            covariance: sigma,
        },
        converged: cov.converged && mu.converged,
        iterations: cov.iterations + mu.iterations,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymmetricOperator;
    use crate::models::sample_model;
    use crate::rng::Seed;

    fn gaussian_set(d: usize, n: usize, seed: u64) -> SampleSet {
        sample_model(&Model::Gaussian(GaussianModel::standard(d)), n, Seed(seed)).unwrap()
    }

    #[test]
    fn prune_keeps_identical_pair() {
        let s = SampleSet::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let cfg = FilterConfig::new(0.1);
        assert_eq!(naive_prune(&s, &cfg).unwrap(), s);
    }

    #[test]
    fn prune_removes_planted_far_point() {
        let d = 10;
        let mut rows: Vec<Vec<f64>> = gaussian_set(d, 1000, 3).points().map(<[f64]>::to_vec).collect();
        rows.push(vec![1e3 * (d as f64).sqrt(); d]);
        let s = SampleSet::from_rows(&rows).unwrap();
        let out = naive_prune(&s, &FilterConfig::new(0.1)).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.points().all(|p| p[0] < 100.0));
    }

    #[test]
    fn prune_matches_brute_force_census() {
        // A configuration where the radius bounds do not settle everything.
        let mut rows: Vec<Vec<f64>> = gaussian_set(3, 60, 4).points().map(<[f64]>::to_vec).collect();
        for k in 0..10 {
            rows.push(vec![9.0 + 0.1 * k as f64, 0.0, 0.0]);
        }
        let s = SampleSet::from_rows(&rows).unwrap();
        let cfg = FilterConfig {
            c_prune: 4.0,
            ..FilterConfig::new(0.05)
        };
        let got = naive_prune(&s, &cfg).unwrap();
        let n = rows.len();
        let r2 = cfg.c_prune * 3.0 * (n as f64 / cfg.tau).ln();
        let keep: Vec<bool> = rows
            .iter()
            .map(|x| {
                let far = rows
                    .iter()
                    .filter(|y| x.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() > r2)
                    .count();
                far as f64 <= 2.0 * cfg.epsilon * n as f64
            })
            .collect();
        assert_eq!(got, s.retain(&keep));
    }

    #[test]
    fn mean_step_accepts_exact_moments() {
        // ±e_i: mean 0 and covariance exactly I.
        let d = 4;
        let mut rows = Vec::new();
        for i in 0..d {
            let mut r = vec![0.0; d];
            r[i] = (d as f64).sqrt();
            rows.push(r.clone());
            r[i] = -(d as f64).sqrt();
            rows.push(r);
        }
        let s = SampleSet::from_rows(&rows).unwrap();
        let out = filter_mean_step(&s, &FilterConfig::new(1e-3)).unwrap();
        let StepResult::Estimate(Model::Gaussian(g)) = out.result else {
            panic!("expected estimate")
        };
        assert!(g.mean.amax() < 1e-15);
    }

    #[test]
    fn single_sample_is_flagged() {
        let s = SampleSet::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let fit = learn_gaussian_mean(&s, &FilterConfig::new(0.1)).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.model.mean.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn centered_operator_matches_dense_construction() {
        let s = gaussian_set(3, 40, 7);
        let sigma = second_moment(&s);
        let w = sym_inv_sqrt(&sigma, WHITEN_FLOOR).unwrap();
        let y = &w * s.matrix();
        let op = CenteredFourthOperator::new(&y);
        let dense = crate::linalg::empirical_fourth_operator(&s, &w).unwrap();
        let id = flatten(&DMatrix::identity(3, 3));
        let centered = dense - (&id * id.transpose()) * 2.0;
        let x = DVector::from_fn(9, |i, _| ((i * 5 % 7) as f64) - 3.0);
        let xs = flatten(&symmetrize(&DMatrix::from_row_slice(3, 3, x.as_slice())));
        let mut got = vec![0.0; 9];
        op.apply(xs.as_slice(), &mut got);
        let want = &centered * &xs;
        for k in 0..9 {
            assert!((got[k] - want[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn find_max_poly_invariants() {
        let s = gaussian_set(3, 100, 8);
        let sigma = second_moment(&s);
        let cfg = FilterConfig {
            eig_tol: 1e-11,
            ..FilterConfig::new(0.1)
        };
        let (p, _) = find_max_poly(&s, &sigma, &cfg).unwrap();
        assert!(crate::linalg::asymmetry(&p.quad) < 1e-10);
        let values = p.eval_all(&s);
        let m: f64 = values.iter().sum::<f64>() / values.len() as f64;
        assert!(m.abs() < 1e-6);
    }

    #[test]
    fn pair_differences_mark_either() {
        let s = SampleSet::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![5.0], vec![9.0]])
            .unwrap()
            .with_mask(vec![false, true, false, false, false])
            .unwrap();
        let p = pair_differences(&s).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p.point(0)[0] - (1.0 - 3.0) / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.mask(), Some(&[false, true][..]));
    }
}
