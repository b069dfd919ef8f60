//! Mean estimation by searching the weight polytope with a separation
//! oracle.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, StepKind, StepRecord};
use crate::gaussian::{naive_prune, record};
use crate::linalg::{
    project_capped_simplex, top_eigenpair_abs, weighted_mean, SymmetricOperator, WeightVector,
};
use crate::models::GaussianModel;
use crate::samples::SampleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexConfig {
    /// The oracle answers yes when `|λ| < (c_sep / 2) · ε ln(1/ε)`.
    pub c_sep: f64,
    /// Each cut moves the iterate to where the linearized cut value is
    /// `−step · |λ|`.
    pub step: f64,
    pub max_iterations: usize,
    pub eig_tol: f64,
}

impl Default for ConvexConfig {
    fn default() -> Self {
        ConvexConfig {
            c_sep: 3.0,
            step: 1.0,
            max_iterations: 500,
            eig_tol: 1e-8,
        }
    }
}

/// `ℓ(w) = Σ coeffs_i w_i + offset`; the oracle's query satisfies `ℓ ≥ 0`
/// and the clean-uniform weights are expected to satisfy `ℓ < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.coeffs.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleAnswer {
    Yes,
    Cut(Hyperplane),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReply {
    pub answer: OracleAnswer,
    /// Eigenvalue of largest magnitude of `Σ w_i Y_i Y_iᵀ − I`.
    pub lambda: f64,
    pub mean: DVector<f64>,
}

/// `v ↦ Σ w_i (x_i − μ)(x_i − μ)ᵀ v − v`, without forming the matrix.
struct WeightedScatter<'a> {
    samples: &'a SampleSet,
    w: &'a [f64],
    center: &'a DVector<f64>,
}

impl SymmetricOperator for WeightedScatter<'_> {
    fn dim(&self) -> usize {
        self.samples.dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let x = self.samples.matrix();
        let v = DVector::from_column_slice(v);
        let shift = self.center.dot(&v);
        let proj = x.tr_mul(&v);
        let coef = DVector::from_fn(self.w.len(), |i, _| self.w[i] * (proj[i] - shift));
        let total: f64 = coef.sum();
        let y = x * &coef - self.center * total - v;
        out.copy_from_slice(y.as_slice());
    }
}

pub fn separation_oracle_mean(
    w: &WeightVector,
    samples: &SampleSet,
    cfg: &ConvexConfig,
) -> Result<OracleReply> {
    let n = samples.len();
    if w.len() != n {
        return Err(Error::param("weight vector length differs from sample count"));
    }
    let eps = w.epsilon();
    let mu = weighted_mean(samples, w);
    let op = WeightedScatter {
        samples,
        w,
        center: &mu,
    };
    let pair = top_eigenpair_abs(&op, cfg.eig_tol)?;
    let lambda = pair.value;
    let accept = 0.5 * cfg.c_sep * eps * (1.0 / eps).ln();
    if lambda.abs() < accept {
        return Ok(OracleReply {
            answer: OracleAnswer::Yes,
            lambda,
            mean: mu,
        });
    }
    let sign = lambda.signum();
    let shift = pair.vector.dot(&mu);
    let coeffs: Vec<f64> = samples
        .matrix()
        .tr_mul(&pair.vector)
        .iter()
        .map(|p| sign * (p - shift) * (p - shift))
        .collect();
    Ok(OracleReply {
        answer: OracleAnswer::Cut(Hyperplane {
            coeffs,
            offset: -sign - lambda.abs(),
        }),
        lambda,
        mean: mu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexFit {
    pub model: GaussianModel,
    /// Final weights over the samples that survived pruning.
    pub weights: WeightVector,
    pub converged: bool,
    pub iterations: usize,
    pub steps: Vec<StepRecord>,
}

/// Prunes, then walks the weight polytope against the oracle's cuts until
/// it answers yes. On hitting the cap, the iterate with the smallest `|λ|`
/// is returned unconverged.
pub fn learn_mean_convex(
    samples: &SampleSet,
    filter: &FilterConfig,
    cfg: &ConvexConfig,
) -> Result<ConvexFit> {
    filter.validate()?;
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    let eps = filter.epsilon;
    let (pruned, steps) = if samples.len() >= 2 {
        let p = naive_prune(samples, filter)?;
        let rec = record(StepKind::Prune, f64::NAN, samples, &p);
        (p, vec![rec])
    } else {
        (samples.clone(), Vec::new())
    };
    let n = pruned.len();
    let mut w = WeightVector::uniform(n, eps)?;
    let mut best: Option<(f64, WeightVector, DVector<f64>)> = None;
    for it in 1..=cfg.max_iterations {
        let reply = separation_oracle_mean(&w, &pruned, cfg)?;
        let cut = match reply.answer {
            OracleAnswer::Yes => {
                return Ok(ConvexFit {
                    model: GaussianModel::new(reply.mean, identity(pruned.dim()))?,
                    weights: w,
                    converged: true,
                    iterations: it,
                    steps,
                })
            }
            OracleAnswer::Cut(h) => h,
        };
        if best.as_ref().is_none_or(|b| reply.lambda.abs() < b.0) {
            best = Some((reply.lambda.abs(), w.clone(), reply.mean.clone()));
        }
        // Step along the cut's normal restricted to the sum-zero subspace.
        let avg = cut.coeffs.iter().sum::<f64>() / n as f64;
        let g: Vec<f64> = cut.coeffs.iter().map(|c| c - avg).collect();
        let g2: f64 = g.iter().map(|x| x * x).sum();
        if g2 == 0.0 {
            break;
        }
        let t = cfg.step * reply.lambda.abs() / g2;
        let y: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - t * gi).collect();
        w = project_capped_simplex(&y, eps)?;
    }
    let (_, weights, mean) = match best {
        Some(b) => b,
        None => {
            let m = weighted_mean(&pruned, &w);
            (0.0, w, m)
        }
    };
    Ok(ConvexFit {
        model: GaussianModel::new(mean, identity(pruned.dim()))?,
        weights,
        converged: false,
        iterations: cfg.max_iterations,
        steps,
    })
}

fn identity(d: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::identity(d, d)
}
