//! Numerical primitives shared by the estimators.

mod eigen;
mod moments;
mod quadratic;
mod tensor;
mod weights;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub use eigen::{
    canonical_sign, eigenpairs_above, extreme_eigenpair, top_eigenpair_abs,
    top_eigenpair_constrained, EigenOptions, Eigenpair, SymmetricOperator, Which,
};
pub use moments::{
    covariance, mean, second_moment, weighted_covariance, weighted_mean, CHUNK,
};
pub use quadratic::EvenQuadratic;
pub use tensor::{empirical_fourth_operator, flatten, gaussian_fourth_operator, unflatten};
pub use weights::{project_capped_simplex, WeightVector};

/// Copy of `m` with the diagonal set to zero.
pub fn zero_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    out.fill_diagonal(0.0);
    out
}

/// `(m + mᵀ) / 2`, which is exactly symmetric in floating point.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Relative asymmetry `max |m_ij − m_ji| / max(1, max |m_ij|)`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

fn eigen_checked(s: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !s.is_square() {
        return Err(Error::param("matrix is not square"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("matrix has non-finite entries"));
    }
    Ok(SymmetricEigen::new(symmetrize(s)))
}

fn reassemble(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(eig.eigenvalues[k]);
    }
    symmetrize(&(scaled * u.transpose()))
}

/// `U diag(max(λ_i, floor·λ_max)^{-1/2}) Uᵀ` for a symmetric PSD `s`.
pub fn sym_inv_sqrt(s: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let eig = eigen_checked(s)?;
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return Err(Error::Singular {
            eigenvalue: lmax,
            context: "inverse square root of a matrix with no positive eigenvalue".into(),
        });
    }
    let lo = floor * lmax;
    Ok(reassemble(&eig, |l| l.max(lo).powf(-0.5)))
}

/// Symmetric square root, clamping negative eigenvalues to zero.
pub fn sym_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = eigen_checked(s)?;
    Ok(reassemble(&eig, |l| l.max(0.0).sqrt()))
}

/// Spectral norm of a symmetric matrix, computed densely.
pub fn dense_spectral_norm(s: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(s))
        .eigenvalues
        .iter()
        .fold(0.0, |a: f64, b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n + 2, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        &a * a.transpose() / n as f64
    }

    #[test]
    fn zero_diagonal_cases() {
        assert_eq!(zero_diagonal(&DMatrix::identity(3, 3)), DMatrix::zeros(3, 3));
        let ones = DMatrix::from_element(2, 2, 1.0);
        let z = zero_diagonal(&ones);
        assert_eq!(z, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let m = random_psd(5, 3);
        let z = zero_diagonal(&m);
        for i in 0..5 {
            assert_eq!(z[(i, i)].to_bits(), 0.0f64.to_bits());
            for j in 0..5 {
                if i != j {
                    assert_eq!(z[(i, j)], m[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn inv_sqrt_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((sym_inv_sqrt(&i, 1e-12).unwrap() - &i).amax() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = sym_inv_sqrt(&d, 1e-12).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((r[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(r[(0, 1)].abs() < 1e-14);
        assert!(sym_inv_sqrt(&DMatrix::zeros(2, 2), 1e-12).is_err());
    }

    #[test]
    fn inv_sqrt_reconstruction_and_commutation() {
        for seed in 0..5 {
            let s = random_psd(6, seed);
            let r = sym_inv_sqrt(&s, 1e-12).unwrap();
            let recon = &r * &s * &r;
            assert!((recon - DMatrix::<f64>::identity(6, 6)).amax() < 1e-8);
            assert!((&r * &s - &s * &r).amax() < 1e-8);
            assert_eq!(asymmetry(&r), 0.0);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let s = random_psd(4, 8);
        let r = sym_sqrt(&s).unwrap();
        assert!((&r * &r - &s).amax() < 1e-10);
    }
}
