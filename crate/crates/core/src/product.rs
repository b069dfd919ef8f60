//! Robust learning of binary product distributions.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::filter::{
    tail_threshold_search, Diagnostics, FilterConfig, FilterOutcome, Fit, StepKind, StepResult,
    TailRule,
};
use crate::gaussian::record;
use crate::linalg::{covariance, mean, top_eigenpair_abs, zero_diagonal};
use crate::models::{BinaryProductModel, Model};
use crate::samples::SampleSet;

pub(crate) fn check_binary(samples: &SampleSet) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    if samples.matrix().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::param("binary samples must be 0 or 1"));
    }
    Ok(())
}

/// Clamps means into `[ε/(2d), 1 − ε/(2d)]` so densities stay positive.
pub fn clamp_means(mean: &DVector<f64>, epsilon: f64) -> DVector<f64> {
    let lo = epsilon / (2.0 * mean.len().max(1) as f64);
    mean.map(|p| p.clamp(lo, 1.0 - lo))
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn projections(samples: &SampleSet, v: &DVector<f64>, center: &DVector<f64>) -> Vec<f64> {
    let offset = v.dot(center);
    samples
        .matrix()
        .tr_mul(v)
        .iter()
        .map(|p| (p - offset).abs())
        .collect()
}

/// One step of the filter for a balanced product, driven by the sample
/// covariance with its diagonal zeroed.
pub fn filter_balanced_step(samples: &SampleSet, cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    check_binary(samples)?;
    let d = samples.dim();
    let eps = cfg.epsilon;
    let mu = mean(samples);
    let m = zero_diagonal(&covariance(samples, &mu));
    let pair = top_eigenpair_abs(&m, cfg.eig_tol)?;
    let lambda = pair.value.abs();
    let mut diag = Diagnostics {
        lambda_star: pair.value,
        direction: pair.vector.as_slice().to_vec(),
        ..Default::default()
    };
    if lambda <= cfg.c_spectral * eps * cfg.log_inv_eps() {
        return Ok(FilterOutcome::estimate(
            Model::BinaryProduct(BinaryProductModel { mean: mu }),
            diag,
        ));
    }
    let delta = 3.0 * (eps * lambda).sqrt();
    diag.delta = delta;
    let mags = projections(samples, &pair.vector, &mu);
    let bound = |t: f64| 8.0 * (-t * t / 2.0).exp() + 8.0 * eps / d as f64;
    let Some(found) = tail_threshold_search(&sorted(&mags), delta, bound, 0.0, TailRule::Strict)
    else {
        return Err(Error::ViolatedAssumption {
            step: "filter_balanced_step",
            diagnostics: Box::new(diag),
        });
    };
    diag.threshold = Some(found.t);
    let keep: Vec<bool> = mags.iter().map(|&m| m <= found.cutoff).collect();
    Ok(FilterOutcome::reduced(samples, &keep, diag))
}

fn iterate(
    samples: &SampleSet,
    cfg: &FilterConfig,
    cap: usize,
    step: impl Fn(&SampleSet, &FilterConfig) -> Result<FilterOutcome>,
) -> Result<Fit<BinaryProductModel>> {
    let mut current = samples.clone();
    let mut steps = Vec::new();
    for it in 1..=cap {
        let out = step(&current, cfg)?;
        match out.result {
            StepResult::Estimate(Model::BinaryProduct(p)) => {
                return Ok(Fit {
                    model: BinaryProductModel {
                        mean: clamp_means(&p.mean, cfg.epsilon),
                    },
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
            _ => unreachable!("product filters emit estimates or reductions"),
        }
    }
    Ok(Fit {
        model: BinaryProductModel {
            mean: clamp_means(&mean(&current), cfg.epsilon),
        },
        converged: false,
        iterations: cap,
        steps,
    })
}

/// Iterates [`filter_balanced_step`] at most `d + 1` times.
pub fn learn_balanced_product(
    samples: &SampleSet,
    cfg: &FilterConfig,
) -> Result<Fit<BinaryProductModel>> {
    cfg.validate()?;
    check_binary(samples)?;
    let cap = cfg.max_iterations.unwrap_or(samples.dim() + 1).max(1);
    iterate(samples, cfg, cap, filter_balanced_step)
}

/// One step of the filter for an arbitrary product, which works with the
/// covariance rescaled by `D = diag(1/√(μ_i(1 − μ_i)))`.
pub fn filter_general_step(samples: &SampleSet, cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    check_binary(samples)?;
    let d = samples.dim();
    let n = samples.len();
    let eps = cfg.epsilon;
    let mu = mean(samples);
    let edge = eps / d as f64;

    let biased: Vec<usize> = (0..d)
        .filter(|&i| (mu[i] > 0.0 && mu[i] < edge) || (mu[i] < 1.0 && 1.0 - mu[i] < edge))
        .collect();
    if !biased.is_empty() {
        // Condition on the most common value of every biased coordinate.
        let common: Vec<(usize, f64)> = biased
            .iter()
            .map(|&i| (i, if mu[i] < 0.5 { 0.0 } else { 1.0 }))
            .collect();
        let keep: Vec<bool> = samples
            .points()
            .map(|p| common.iter().all(|&(i, v)| p[i] == v))
            .collect();
        let diag = Diagnostics {
            lambda_star: f64::NAN,
            direction: biased.iter().map(|&i| i as f64).collect(),
            ..Default::default()
        };
        return Ok(FilterOutcome::reduced(samples, &keep, diag));
    }

    let support: Vec<usize> = (0..d).filter(|&i| mu[i] > 0.0 && mu[i] < 1.0).collect();
    let estimate = |diag| {
        FilterOutcome::estimate(
            Model::BinaryProduct(BinaryProductModel { mean: mu.clone() }),
            diag,
        )
    };
    if support.is_empty() {
        return Ok(estimate(Diagnostics::default()));
    }
    let k = support.len();
    let sub = samples.matrix().select_rows(&support);
    let sub = SampleSet::from_columns(sub)?;
    let mu_s = DVector::from_fn(k, |a, _| mu[support[a]]);
    let scale = mu_s.map(|p| 1.0 / (p * (1.0 - p)).sqrt());
    let mut dmd = covariance(&sub, &mu_s);
    for a in 0..k {
        for b in 0..k {
            dmd[(a, b)] *= scale[a] * scale[b];
        }
    }
    let pair = top_eigenpair_abs(&dmd, cfg.eig_tol)?;
    let lambda = pair.value.abs();
    let mut direction = vec![0.0; d];
    let v_star = pair.vector.component_mul(&scale);
    for (a, &i) in support.iter().enumerate() {
        direction[i] = v_star[a];
    }
    let mut diag = Diagnostics {
        lambda_star: pair.value,
        direction,
        ..Default::default()
    };
    if lambda < cfg.c_spectral * cfg.log_inv_eps() {
        return Ok(estimate(diag));
    }
    let delta = 3.0 * (eps * lambda).sqrt();
    diag.delta = delta;
    let mags = projections(&sub, &v_star, &mu_s);
    let dd = d as f64;
    let bound = |t: f64| 20.0 / (t * t) + 4.0 * eps.powf(1.5) / (dd * dd);
    let Some(found) = tail_threshold_search(&sorted(&mags), delta, bound, 0.0, TailRule::Strict)
    else {
        return Err(Error::ViolatedAssumption {
            step: "filter_general_step",
            diagnostics: Box::new(diag),
        });
    };
    debug_assert_eq!(mags.len(), n);
    diag.threshold = Some(found.t);
    let keep: Vec<bool> = mags.iter().map(|&m| m <= found.cutoff).collect();
    Ok(FilterOutcome::reduced(samples, &keep, diag))
}

/// Iterates [`filter_general_step`] at most `4d` times.
pub fn learn_general_product(
    samples: &SampleSet,
    cfg: &FilterConfig,
) -> Result<Fit<BinaryProductModel>> {
    cfg.validate()?;
    check_binary(samples)?;
    let cap = cfg.max_iterations.unwrap_or(4 * samples.dim()).max(1);
    iterate(samples, cfg, cap, filter_general_step)
}

/// `Σ (x_i − y_i)² / (x_i (1 − x_i))`.
///
/// A coordinate with `x_i ∈ {0, 1}` contributes nothing when `y_i = x_i` and
/// makes the distance `+∞` otherwise.
pub fn chi_squared_asym(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    assert_eq!(x.len(), y.len(), "dimension mismatch");
    let mut acc = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let var = a * (1.0 - a);
        if var <= 0.0 {
            if a != b {
                return f64::INFINITY;
            }
            continue;
        }
        acc += (a - b) * (a - b) / var;
    }
    acc
}

/// Empirical mean of binary samples; a convenience for parity checks.
pub fn empirical_frequencies(samples: &SampleSet) -> DVector<f64> {
    mean(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::sample_model;
    use crate::rng::Seed;

    fn product_set(p: &[f64], n: usize, seed: u64) -> SampleSet {
        let m = Model::BinaryProduct(BinaryProductModel::new(DVector::from_column_slice(p)).unwrap());
        sample_model(&m, n, Seed(seed)).unwrap()
    }

    #[test]
    fn chi_squared_examples() {
        let v = |x: &[f64]| DVector::from_column_slice(x);
        assert_eq!(chi_squared_asym(&v(&[0.3, 0.6]), &v(&[0.3, 0.6])), 0.0);
        assert!((chi_squared_asym(&v(&[0.5]), &v(&[0.25])) - 0.25).abs() < 1e-15);
        let a = chi_squared_asym(&v(&[0.9]), &v(&[0.5]));
        let b = chi_squared_asym(&v(&[0.5]), &v(&[0.9]));
        assert!((a - 0.16 / 0.09).abs() < 1e-12);
        assert!((b - 0.64).abs() < 1e-12);
        assert_eq!(chi_squared_asym(&v(&[1.0]), &v(&[0.5])), f64::INFINITY);
        assert_eq!(chi_squared_asym(&v(&[1.0]), &v(&[1.0])), 0.0);
    }

    #[test]
    fn rejects_non_binary() {
        let s = SampleSet::from_rows(&[vec![0.5]]).unwrap();
        assert!(filter_balanced_step(&s, &FilterConfig::new(0.1)).is_err());
    }

    #[test]
    fn one_dimensional_balanced_is_clamped_frequency() {
        let s = product_set(&[0.3], 2000, 1);
        let cfg = FilterConfig::new(0.05);
        let fit = learn_balanced_product(&s, &cfg).unwrap();
        let freq = mean(&s)[0];
        assert_eq!(fit.model.mean[0], freq.clamp(0.025, 0.975));
    }

    #[test]
    fn identical_rows_are_their_own_estimate() {
        let s = SampleSet::from_rows(&vec![vec![1.0, 0.0, 1.0]; 20]).unwrap();
        let out = filter_general_step(&s, &FilterConfig::new(0.1)).unwrap();
        let StepResult::Estimate(Model::BinaryProduct(p)) = out.result else {
            panic!("expected estimate")
        };
        assert_eq!(p.mean.as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn biased_coordinate_triggers_conditioning() {
        let d = 4;
        let eps = 0.1;
        // One coordinate fires in 1 of 200 rows: mean 0.005 < ε/d = 0.025.
        let mut rows: Vec<Vec<f64>> = product_set(&[0.5; 4], 200, 2)
            .points()
            .map(<[f64]>::to_vec)
            .collect();
        for r in rows.iter_mut() {
            r[3] = 0.0;
        }
        rows[17][3] = 1.0;
        let s = SampleSet::from_rows(&rows).unwrap();
        let out = filter_general_step(&s, &FilterConfig::new(eps)).unwrap();
        let StepResult::Reduced(r) = out.result else { panic!("expected reduction") };
        assert_eq!(r.len(), 199);
        assert!(r.points().all(|p| p[3] == 0.0));
        let _ = d;
    }
}
