//! KL divergence and total-variation bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{sym_inv_sqrt, symmetrize};
use crate::models::{GaussianModel, Model};

/// Largest dimension for which `{0,1}^d` is enumerated.
pub const MAX_ENUM_DIM: usize = 14;

fn log_det_checked(s: &DMatrix<f64>, context: &str) -> Result<(f64, SymmetricEigen<f64, nalgebra::Dyn>)> {
    let eig = SymmetricEigen::new(symmetrize(s));
    let hi = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 1e-12 * hi) || hi <= 0.0 {
        return Err(Error::Singular {
            eigenvalue: lo,
            context: context.into(),
        });
    }
    Ok((eig.eigenvalues.iter().map(|l| l.ln()).sum(), eig))
}

/// `KL(a ‖ b)` for Gaussians. Infinite when `a` is degenerate and `b` is not.
pub fn kl_gaussian(a: &GaussianModel, b: &GaussianModel) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::param("dimension mismatch"));
    }
    let (ld_b, eig) = log_det_checked(&b.covariance, "covariance of the second argument")?;
    let inv = {
        let u = &eig.eigenvectors;
        let mut scaled = u.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col /= eig.eigenvalues[k];
        }
        symmetrize(&(scaled * u.transpose()))
    };
    let ld_a = match log_det_checked(&a.covariance, "") {
        Ok((v, _)) => v,
        Err(_) => return Ok(f64::INFINITY),
    };
    let diff = &b.mean - &a.mean;
    let trace = (&inv * &a.covariance).trace();
    let maha = diff.dot(&(&inv * &diff));
    Ok(0.5 * (trace + maha - d as f64 - (ld_a - ld_b)))
}

/// `min(1, ½‖μ₂ − μ₁‖₂)`, valid for identity-covariance Gaussians.
pub fn tv_upper_gaussian_means(mu1: &DVector<f64>, mu2: &DVector<f64>) -> f64 {
    (0.5 * (mu2 - mu1).norm()).min(1.0)
}

/// `min(1, k‖I − Σ₂^{-1/2} Σ₁ Σ₂^{-1/2}‖_F)` for zero-mean Gaussians.
pub fn tv_upper_gaussian_cov(s1: &DMatrix<f64>, s2: &DMatrix<f64>, k: f64) -> Result<f64> {
    if s1.shape() != s2.shape() {
        return Err(Error::param("dimension mismatch"));
    }
    log_det_checked(s2, "covariance of the second argument")?;
    let w = sym_inv_sqrt(s2, 0.0)?;
    let m = &w * s1 * &w;
    let delta = (DMatrix::identity(m.nrows(), m.ncols()) - m).norm();
    Ok((k * delta).min(1.0))
}

/// `min(1, √(2 Σ (p_i − q_i)² / ((p_i + q_i)(2 − p_i − q_i))))`.
///
/// A coordinate with `p_i + q_i ∈ {0, 2}` has `p_i = q_i` and contributes 0.
pub fn tv_bound_products(p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    assert_eq!(p.len(), q.len(), "dimension mismatch");
    let mut z = 0.0;
    for (&a, &b) in p.iter().zip(q.iter()) {
        let den = (a + b) * (2.0 - a - b);
        if den > 0.0 {
            z += (a - b) * (a - b) / den;
        }
    }
    (2.0 * z).sqrt().min(1.0)
}

/// Point masses of a discrete model on `{0,1}^d`, indexed so that bit `j`
/// of the index is coordinate `j`.
pub(crate) fn mass_table(model: &Model) -> Result<Vec<f64>> {
    if !model.is_discrete() {
        return Err(Error::Unsupported("mass tables need a discrete model".into()));
    }
    let d = model.dim();
    if d > MAX_ENUM_DIM {
        return Err(Error::Unsupported(format!(
            "enumeration limited to d <= {MAX_ENUM_DIM}, got {d}"
        )));
    }
    let dens = model.log_density_fn()?;
    let mut x = vec![0.0; d];
    Ok((0..1usize << d)
        .map(|idx| {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = ((idx >> j) & 1) as f64;
            }
            dens.eval(&x).exp()
        })
        .collect())
}

/// Index of a binary point in [`mass_table`] order.
pub(crate) fn pattern_index(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |acc, (j, &v)| acc | (usize::from(v != 0.0) << j))
}

/// Exact total variation between discrete models on `{0,1}^d`, `d ≤ 14`.
pub fn tv_exact_small(a: &Model, b: &Model) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::param("dimension mismatch"));
    }
    let pa = mass_table(a)?;
    let pb = mass_table(b)?;
    Ok(0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}
