//! Flattening and fourth-moment operators on `d × d` matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::samples::SampleSet;

/// Row-major flattening: `M♭[i·d + j] = M[i, j]`.
pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    DVector::from_fn(r * c, |k, _| m[(k / c, k % c)])
}

/// Inverse of [`flatten`] for square matrices.
pub fn unflatten(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::param(format!("length {} is not a square", v.len())));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| v[i * d + j]))
}

/// `2 Σ⊗Σ + Σ♭ Σ♭ᵀ`, the fourth moment `E[(X⊗X)(X⊗X)ᵀ]` of `N(0, Σ)` as an
/// operator on flattened symmetric matrices.
pub fn gaussian_fourth_operator(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let f = flatten(sigma);
    let mut out = sigma.kronecker(sigma) * 2.0;
    out.ger(1.0, &f, &f, 1.0);
    out
}

/// `I♭I♭ᵀ + (1/N) Σ_i z_i z_iᵀ` with `z_i = (F x_i)⊗(F x_i)`.
///
/// Materializes a `d² × d²` matrix; intended for small `d`.
pub fn empirical_fourth_operator(samples: &SampleSet, frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::param("fourth-moment operator needs at least one sample"));
    }
    if frame.ncols() != samples.dim() {
        return Err(Error::param("frame has wrong number of columns"));
    }
    let k = frame.nrows();
    let y = frame * samples.matrix();
    let mut z = DMatrix::zeros(k * k, n);
    for (i, col) in y.column_iter().enumerate() {
        for a in 0..k {
            for b in 0..k {
                z[(a * k + b, i)] = col[a] * col[b];
            }
        }
    }
    let id = flatten(&DMatrix::identity(k, k));
    let mut out = &z * z.transpose() / n as f64;
    out.ger(1.0, &id, &id, 1.0);
    Ok(out)
}
