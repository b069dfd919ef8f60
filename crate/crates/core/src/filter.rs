//! Configuration, outcomes, and the threshold search shared by all filters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::samples::{Census, SampleSet};

/// Constants of the filter algorithms. The asymptotic statements leave them
/// unspecified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub epsilon: f64,
    pub tau: f64,
    /// Accept when `‖Σ − I‖₂ ≤ c_spectral · ε ln(1/ε)` (also the balanced
    /// and general product filters, with their own scalings).
    pub c_spectral: f64,
    /// Pruning radius `c_prune · d · ln(N/τ)` (squared distance), also the
    /// Mahalanobis gate of the covariance filter.
    pub c_prune: f64,
    /// Accept when `Q_{S'}(p*) ≤ 1 + c_quadratic · ε ln²(1/ε)`.
    pub c_quadratic: f64,
    /// Lower limit `C'` for the covariance filter's threshold.
    pub c_tail_floor: f64,
    /// `None` selects the per-algorithm default cap.
    pub max_iterations: Option<usize>,
    pub eig_tol: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            epsilon: 0.1,
            tau: 0.1,
            c_spectral: 9.0,
            c_prune: 10.0,
            c_quadratic: 2.0,
            c_tail_floor: 2.0,
            max_iterations: None,
            eig_tol: 1e-8,
        }
    }
}

impl FilterConfig {
    pub fn new(epsilon: f64) -> Self {
        FilterConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        FilterConfig {
            epsilon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::param(format!("epsilon {} outside (0, 1/2)", self.epsilon)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::param(format!("tau {} outside (0, 1)", self.tau)));
        }
        let consts = [
            ("c_spectral", self.c_spectral),
            ("c_prune", self.c_prune),
            ("c_quadratic", self.c_quadratic),
            ("c_tail_floor", self.c_tail_floor),
            ("eig_tol", self.eig_tol),
        ];
        for (name, v) in consts {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `ln(1/ε)`.
    pub fn log_inv_eps(&self) -> f64 {
        (1.0 / self.epsilon).ln()
    }
}

/// What a single filter step saw and did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub lambda_star: f64,
    pub direction: Vec<f64>,
    pub delta: f64,
    pub threshold: Option<f64>,
    pub removed: usize,
}

impl Diagnostics {
    pub fn summary(&self) -> String {
        let t = self
            .threshold
            .map_or_else(|| "none".to_string(), |t| format!("{t:.4}"));
        format!(
            "lambda*={:.6}, delta={:.4}, T={t}, removed={}",
            self.lambda_star, self.delta, self.removed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Estimate(Model),
    Reduced(SampleSet),
    Candidates(Vec<Model>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub result: StepResult,
    pub diagnostics: Diagnostics,
}

impl FilterOutcome {
    pub(crate) fn estimate(model: Model, diagnostics: Diagnostics) -> Self {
        FilterOutcome {
            result: StepResult::Estimate(model),
            diagnostics,
        }
    }

    /// Builds a `Reduced` outcome from a keep-mask; requires at least one
    /// removal.
    pub(crate) fn reduced(samples: &SampleSet, keep: &[bool], mut diagnostics: Diagnostics) -> Self {
        let kept = samples.retain(keep);
        diagnostics.removed = samples.len() - kept.len();
        debug_assert!(diagnostics.removed >= 1);
        FilterOutcome {
            result: StepResult::Reduced(kept),
            diagnostics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Distance-based pruning ahead of the spectral filter.
    Prune,
    /// A `Reduced` outcome of a filter step.
    Filter,
}

/// Per-step record kept by the iterating drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub kind: StepKind,
    pub lambda_star: f64,
    pub removed: usize,
    /// Ground-truth split of the removed rows, when the input carried a mask.
    pub census: Option<Census>,
}

/// Result of an iterating driver.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit<M> {
    pub model: M,
    /// False when the iteration cap was hit or no filtering was possible.
    pub converged: bool,
    pub iterations: usize,
    pub steps: Vec<StepRecord>,
}

impl<M> Fit<M> {
    pub fn map<N>(self, f: impl FnOnce(M) -> N) -> Fit<N> {
        Fit {
            model: f(self.model),
            converged: self.converged,
            iterations: self.iterations,
            steps: self.steps,
        }
    }

    pub fn total_census(&self) -> Option<Census> {
        let mut acc = Census::default();
        for s in &self.steps {
            let c = s.census?;
            acc.corrupt += c.corrupt;
            acc.clean += c.clean;
        }
        Some(acc)
    }
}

/// How the tail fraction is counted at a candidate threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailRule {
    /// `#{m > T + δ}` against `> bound(T)`.
    Strict,
    /// `#{m ≥ T + δ}` against `≥ bound(T)`.
    Inclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailThreshold {
    pub t: f64,
    /// `T + δ` as compared against the magnitudes.
    pub cutoff: f64,
    pub tail_fraction: f64,
}

/// Smallest `T ≥ t_min` whose tail fraction beats `bound(T)`.
///
/// The tail count is piecewise constant with jumps at `m_i − δ`. Each jump
/// point is tested directly; between jumps the smallest admissible `T` is
/// found by bisection, which requires `bound` to be non-increasing.
/// `magnitudes` must be sorted ascending.
pub fn tail_threshold_search(
    magnitudes: &[f64],
    shift: f64,
    bound: impl Fn(f64) -> f64,
    t_min: f64,
    rule: TailRule,
) -> Option<TailThreshold> {
    debug_assert!(magnitudes.windows(2).all(|w| w[0] <= w[1]));
    let n = magnitudes.len();
    if n == 0 {
        return None;
    }
    let strict_count = |cutoff: f64| n - magnitudes.partition_point(|&m| m <= cutoff);
    let count_at = |t: f64| match rule {
        TailRule::Strict => strict_count(t + shift),
        TailRule::Inclusive => n - magnitudes.partition_point(|&m| m < t + shift),
    };
    let beats = |frac: f64, b: f64| match rule {
        TailRule::Strict => frac > b,
        TailRule::Inclusive => frac >= b,
    };
    let found = |t: f64, count: usize| TailThreshold {
        t,
        cutoff: t + shift,
        tail_fraction: count as f64 / n as f64,
    };
    let mut breaks: Vec<f64> = std::iter::once(t_min)
        .chain(magnitudes.iter().map(|m| m - shift).filter(|&t| t > t_min))
        .collect();
    breaks.dedup();
    for (k, &a) in breaks.iter().enumerate() {
        let c = count_at(a);
        if c > 0 && beats(c as f64 / n as f64, bound(a)) {
            return Some(found(a, c));
        }
        // On the open interval after `a` both rules count `m > T + δ`.
        let open = strict_count(a + shift);
        if open == 0 {
            return None;
        }
        let frac = open as f64 / n as f64;
        let Some(&b) = breaks.get(k + 1) else {
            return None;
        };
        if !beats(frac, bound(b)) {
            continue;
        }
        let (mut lo, mut hi) = (a, b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if beats(frac, bound(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if hi < b {
            return Some(found(hi, open));
        }
    }
    None
}

/// Lower median of unsorted values.
pub(crate) fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let k = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *m
}
