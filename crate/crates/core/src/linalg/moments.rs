use nalgebra::{DMatrix, DVector};

use crate::samples::SampleSet;

use super::symmetrize;

/// Columns processed per block in the moment kernels.
pub const CHUNK: usize = 2048;

/// `Σ_i w_i x_i`.
pub fn weighted_mean(samples: &SampleSet, w: &[f64]) -> DVector<f64> {
    assert_eq!(w.len(), samples.len(), "weight length must match sample count");
    samples.matrix() * DVector::from_column_slice(w)
}

pub fn mean(samples: &SampleSet) -> DVector<f64> {
    let n = samples.len();
    let mut acc = DVector::zeros(samples.dim());
    for col in samples.matrix().column_iter() {
        acc += col;
    }
    if n > 0 {
        acc /= n as f64;
    }
    acc
}

/// `Σ_i w_i (x_i − c)(x_i − c)ᵀ`, exactly symmetric.
pub fn weighted_covariance(samples: &SampleSet, w: &[f64], center: &DVector<f64>) -> DMatrix<f64> {
    assert_eq!(w.len(), samples.len(), "weight length must match sample count");
    assert_eq!(center.len(), samples.dim(), "center has wrong dimension");
    accumulate(samples, center, |i| w[i])
}

/// `(1/N) Σ_i (x_i − c)(x_i − c)ᵀ`.
pub fn covariance(samples: &SampleSet, center: &DVector<f64>) -> DMatrix<f64> {
    let inv = 1.0 / samples.len().max(1) as f64;
    accumulate(samples, center, |_| inv)
}

/// `(1/N) Σ_i x_i x_iᵀ`.
pub fn second_moment(samples: &SampleSet) -> DMatrix<f64> {
    covariance(samples, &DVector::zeros(samples.dim()))
}

fn accumulate(
    samples: &SampleSet,
    center: &DVector<f64>,
    weight: impl Fn(usize) -> f64,
) -> DMatrix<f64> {
    let d = samples.dim();
    let n = samples.len();
    let x = samples.matrix();
    let mut acc = DMatrix::zeros(d, d);
    let mut lo = 0;
    while lo < n {
        let hi = (lo + CHUNK).min(n);
        let mut block = x.columns(lo, hi - lo).into_owned();
        let mut scaled = block.clone();
        for (k, (mut col, mut scol)) in block
            .column_iter_mut()
            .zip(scaled.column_iter_mut())
            .enumerate()
        {
            col -= center;
            scol.copy_from(&col);
            scol *= weight(lo + k);
        }
        acc.gemm(1.0, &scaled, &block.transpose(), 1.0);
        lo = hi;
    }
    symmetrize(&acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_set(n: usize, d: usize, seed: u64) -> SampleSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        SampleSet::from_rows(&rows).unwrap()
    }

    #[test]
    fn simple_means() {
        let s = SampleSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(weighted_mean(&s, &[0.5, 0.5]).as_slice(), &[0.5, 0.5]);
        assert_eq!(weighted_mean(&s, &[0.0, 1.0]).as_slice(), &[0.0, 1.0]);
        assert_eq!(mean(&s).as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn weighted_mean_matches_resummation() {
        let s = random_set(5, 3, 1);
        let w = [0.2, 0.25, 0.15, 0.2, 0.2];
        let got = weighted_mean(&s, &w);
        for j in 0..3 {
            let want: f64 = (0..5).map(|i| w[i] * s.point(i)[j]).sum();
            assert!((got[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_cases() {
        let s = SampleSet::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let c = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(weighted_covariance(&s, &[1.0], &c), DMatrix::zeros(2, 2));

        let v = [0.6, -0.8];
        let s = SampleSet::from_rows(&[v.to_vec(), vec![-0.6, 0.8]]).unwrap();
        let got = weighted_covariance(&s, &[0.5, 0.5], &DVector::zeros(2));
        for i in 0..2 {
            for j in 0..2 {
                assert!((got[(i, j)] - v[i] * v[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_matches_double_loop() {
        let n = CHUNK + 37;
        let s = random_set(n, 4, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let c = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
        let got = weighted_covariance(&s, &w, &c);
        for a in 0..4 {
            for b in 0..4 {
                let mut want = 0.0;
                for i in 0..n {
                    let p = s.point(i);
                    want += w[i] * (p[a] - c[a]) * (p[b] - c[b]);
                }
                assert!((got[(a, b)] - want).abs() < 1e-12);
                assert_eq!(got[(a, b)], got[(b, a)]);
            }
        }
    }
}
